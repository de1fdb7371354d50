/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "cgp/inducing.hpp"
#include "cgp/linalg.hpp"

namespace cgp {

// Joint Gaussian q(U) = N(mean, scale scale^T) over the stacked inducing
// values of all latents. The scale is lower triangular with strictly
// positive diagonal; cross-latent blocks carry the posterior coupling.
struct CoupledGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd scale;
  std::vector<int> block_dim;

  int dim() const { return static_cast<int>(mean.size()); }
  int n_latents() const { return static_cast<int>(block_dim.size()); }

  int offset(int c) const {
    int o = 0;
    for (int i = 0; i < c; ++i) o += block_dim[i];
    return o;
  }

  Eigen::MatrixXd covariance() const { return scale * scale.transpose(); }

  // Rows of the scale belonging to latent c.
  Eigen::Block<const Eigen::MatrixXd> scale_rows(int c) const {
    return scale.middleRows(offset(c), block_dim[c]);
  }
  Eigen::VectorXd mean_block(int c) const { return mean.segment(offset(c), block_dim[c]); }

  void validate() const {
    if (scale.rows() != dim() || scale.cols() != dim())
      throw std::invalid_argument("CoupledGaussian: scale dimension mismatch");
    int total = 0;
    for (int d : block_dim) total += d;
    if (total != dim()) throw std::invalid_argument("CoupledGaussian: block dims inconsistent");
    if (!(scale.diagonal().array() > 0.0).all())
      throw std::invalid_argument("CoupledGaussian: scale diagonal must be positive");
    for (int i = 0; i < dim(); ++i)
      for (int j = i + 1; j < dim(); ++j)
        if (scale(i, j) != 0.0)
          throw std::invalid_argument("CoupledGaussian: scale must be lower triangular");
  }

  // Start at the prior: mean 0, scale = prior Cholesky, so the KL term is 0.
  static CoupledGaussian prior_init(const InducingPrior& prior) {
    CoupledGaussian q;
    q.mean = Eigen::VectorXd::Zero(prior.dim);
    q.scale = Eigen::MatrixXd::Zero(prior.dim, prior.dim);
    for (int c = 0; c < prior.n_latents(); ++c) {
      const int m = prior.chol[c].dim();
      q.scale.block(prior.offset[c], prior.offset[c], m, m) = prior.chol[c].L;
      q.block_dim.push_back(m);
    }
    return q;
  }
};

// Factorized posterior: independent Gaussian per latent.
struct MeanFieldGaussian {
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> scale;

  int n_latents() const { return static_cast<int>(mean.size()); }
};

// Embeds a mean-field posterior as a coupled one with block-diagonal scale.
// Both views of the distribution produce identical KL and predictive output.
inline CoupledGaussian embed_meanfield(const MeanFieldGaussian& mf) {
  CoupledGaussian q;
  int dim = 0;
  for (const auto& m : mf.mean) dim += static_cast<int>(m.size());
  q.mean.resize(dim);
  q.scale = Eigen::MatrixXd::Zero(dim, dim);
  int at = 0;
  for (int c = 0; c < mf.n_latents(); ++c) {
    const int m = static_cast<int>(mf.mean[c].size());
    q.mean.segment(at, m) = mf.mean[c];
    q.scale.block(at, at, m, m) = mf.scale[c].triangularView<Eigen::Lower>();
    q.block_dim.push_back(m);
    at += m;
  }
  return q;
}

// KL[q(U) || p(U)] for block-diagonal prior covariance K:
//   1/2 [ tr(K^{-1} S) + mu^T K^{-1} mu - D + log|K| - log|S| ]
// computed through triangular solves only.
inline double kl_to_prior(const CoupledGaussian& q, const InducingPrior& prior) {
  if (q.dim() != prior.dim) throw std::invalid_argument("kl_to_prior: dimension mismatch");
  double trace = 0.0, quad = 0.0, log_det_k = 0.0;
  for (int c = 0; c < prior.n_latents(); ++c) {
    // tr(K_c^{-1} S_cc) = ||L_c^{-1} R_c||_F^2 with R_c the scale row strip
    const Eigen::MatrixXd u = prior.chol[c].solve(q.scale_rows(c));
    trace += u.squaredNorm();
    quad += prior.chol[c].solve(q.mean_block(c)).squaredNorm();
    log_det_k += prior.chol[c].log_det();
  }
  const double log_det_s = 2.0 * q.scale.diagonal().array().log().sum();
  return 0.5 * (trace + quad - prior.dim + log_det_k - log_det_s);
}

inline double kl_to_prior(const MeanFieldGaussian& mf, const InducingPrior& prior) {
  double total = 0.0;
  for (int c = 0; c < mf.n_latents(); ++c) {
    const auto& chol = prior.chol[c];
    const int m = static_cast<int>(mf.mean[c].size());
    const Eigen::MatrixXd lower = mf.scale[c].triangularView<Eigen::Lower>();
    const double trace = chol.solve(lower).squaredNorm();
    const double quad = chol.solve(mf.mean[c]).squaredNorm();
    const double log_det_s = 2.0 * lower.diagonal().array().log().sum();
    total += 0.5 * (trace + quad - m + chol.log_det() - log_det_s);
  }
  return total;
}

// Closed-form gradients of the KL term.
struct KlGrads {
  Eigen::VectorXd mean_bar;
  Eigen::MatrixXd scale_bar;
  std::vector<Eigen::MatrixXd> gram_bar;  // d KL / d K_c, symmetric
};

inline KlGrads kl_gradients(const CoupledGaussian& q, const InducingPrior& prior) {
  KlGrads g;
  g.mean_bar.resize(q.dim());
  g.scale_bar = Eigen::MatrixXd::Zero(q.dim(), q.dim());
  for (int c = 0; c < prior.n_latents(); ++c) {
    const auto& chol = prior.chol[c];
    const int off = prior.offset[c];
    const int m = q.block_dim[c];
    const Eigen::VectorXd v = chol.mat_solve(q.mean_block(c));  // K^{-1} mu
    g.mean_bar.segment(off, m) = v;
    g.scale_bar.middleRows(off, m) = chol.mat_solve(q.scale_rows(c));  // K^{-1} L rows

    // d KL / d K = 1/2 (K^{-1} - K^{-1} S_cc K^{-1} - v v^T)
    const Eigen::MatrixXd s_cc = q.scale_rows(c) * q.scale_rows(c).transpose();
    const Eigen::MatrixXd kinv = chol.mat_solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd kinv_s = chol.mat_solve(s_cc);
    const Eigen::MatrixXd kinv_s_kinv = chol.mat_solve(kinv_s.transpose());
    g.gram_bar.push_back(0.5 * (kinv - kinv_s_kinv - v * v.transpose()));
  }
  Eigen::MatrixXd lower = g.scale_bar.triangularView<Eigen::Lower>();
  g.scale_bar = std::move(lower);
  g.scale_bar.diagonal() -= q.scale.diagonal().cwiseInverse();
  return g;
}

// Joint predictive q(F(x)) at one batch point: mean in R^C and full C x C
// covariance, including the cross-latent terms carried by the scale.
struct Marginal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline Marginal predictive_marginal(const CoupledGaussian& q, const Projection& proj, int i) {
  const int n_latents = q.n_latents();
  Marginal out;
  out.mean.resize(n_latents);
  out.cov.resize(n_latents, n_latents);
  std::vector<Eigen::VectorXd> p(n_latents);
  for (int c = 0; c < n_latents; ++c) {
    const auto a = proj.coeff[c].row(i);
    out.mean[c] = a.dot(q.mean_block(c));
    p[c] = q.scale_rows(c).transpose() * a.transpose();
  }
  for (int c = 0; c < n_latents; ++c) {
    for (int cp = 0; cp <= c; ++cp) {
      double s = p[c].dot(p[cp]);
      if (c == cp) s += proj.residual[c][i];
      out.cov(c, cp) = s;
      out.cov(cp, c) = s;
    }
  }
  return out;
}

inline Marginal predictive_marginal(const MeanFieldGaussian& mf, const Projection& proj, int i) {
  return predictive_marginal(embed_meanfield(mf), proj, i);
}

}  // namespace cgp
