/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "cgp/kernel.hpp"
#include "cgp/linalg.hpp"

namespace cgp {

// Inducing locations, one vector per latent. Counts may differ per latent.
struct InducingSet {
  std::vector<Eigen::VectorXd> locations;

  int n_latents() const { return static_cast<int>(locations.size()); }
  int count(int c) const { return static_cast<int>(locations[c].size()); }
  int total() const {
    int d = 0;
    for (const auto& z : locations) d += static_cast<int>(z.size());
    return d;
  }

  void validate() const {
    if (locations.empty()) throw std::invalid_argument("InducingSet: no latents");
    for (const auto& z : locations) {
      if (z.size() < 1) throw std::invalid_argument("InducingSet: latent without inducing points");
      if (!z.allFinite()) throw std::invalid_argument("InducingSet: non-finite location");
      if (z.size() < 2) continue;
      Eigen::VectorXd sorted = z;
      std::sort(sorted.data(), sorted.data() + sorted.size());
      const double range = sorted[sorted.size() - 1] - sorted[0];
      double min_gap = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i + 1 < sorted.size(); ++i)
        min_gap = std::min(min_gap, sorted[i + 1] - sorted[i]);
      if (!(min_gap > 1e-8 * range))
        throw std::invalid_argument("InducingSet: locations too close within a latent");
    }
  }
};

// Uniform grid over [min, max] of each latent's covariate column.
inline InducingSet grid_inducing(const Eigen::MatrixXd& x, int m) {
  if (m < 1) throw std::invalid_argument("grid_inducing: need m >= 1");
  InducingSet out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double lo = x.col(c).minCoeff();
    const double hi = x.col(c).maxCoeff();
    Eigen::VectorXd z(m);
    if (m == 1) {
      z[0] = 0.5 * (lo + hi);
    } else {
      for (int j = 0; j < m; ++j) z[j] = lo + (hi - lo) * j / (m - 1);
    }
    out.locations.push_back(z);
  }
  return out;
}

// Prior over the stacked inducing values: independent per latent, so the
// covariance is block-diagonal. gram[c] includes the applied jitter.
struct InducingPrior {
  std::vector<Eigen::MatrixXd> gram;
  std::vector<CholeskyFactor> chol;
  std::vector<int> offset;
  int dim = 0;

  int n_latents() const { return static_cast<int>(gram.size()); }
};

inline InducingPrior build_prior(const InducingSet& inducing,
                                 const std::vector<SqExpKernel>& kernels) {
  inducing.validate();
  if (kernels.size() != inducing.locations.size())
    throw std::invalid_argument("build_prior: one kernel per latent required");
  InducingPrior prior;
  for (int c = 0; c < inducing.n_latents(); ++c) {
    const Eigen::VectorXd& z = inducing.locations[c];
    Eigen::MatrixXd k = gram(kernels[c], z, z);
    CholeskyFactor f = jittered_cholesky(k, kernels[c].variance());
    k.diagonal().array() += f.jitter;
    prior.offset.push_back(prior.dim);
    prior.dim += static_cast<int>(z.size());
    prior.gram.push_back(std::move(k));
    prior.chol.push_back(std::move(f));
  }
  return prior;
}

// Sparse conditional p(f_c(x) | U_c) for a batch of inputs:
//   coeff   A_c = K_xZ K_ZZ^{-1}            (n x M_c)
//   residual r_c(x) = k(x,x) - A_c K_Zx     (clamped at zero)
// whitened keeps V_c = L^{-1} K_Zx for the reverse pass.
struct Projection {
  std::vector<Eigen::MatrixXd> coeff;
  std::vector<Eigen::VectorXd> residual;
  std::vector<Eigen::VectorXd> residual_raw;
  std::vector<Eigen::MatrixXd> cross_gram;  // B_c = k(x, Z_c), n x M_c
  std::vector<Eigen::MatrixXd> whitened;    // V_c, M_c x n
  int n_points = 0;
};

inline Projection project(const InducingSet& inducing, const std::vector<SqExpKernel>& kernels,
                          const InducingPrior& prior, const Eigen::MatrixXd& x) {
  Projection p;
  p.n_points = static_cast<int>(x.rows());
  for (int c = 0; c < inducing.n_latents(); ++c) {
    const double s2 = kernels[c].variance();
    const Eigen::MatrixXd b = gram(kernels[c], x.col(c), inducing.locations[c]);
    Eigen::MatrixXd v = prior.chol[c].solve(b.transpose());
    Eigen::MatrixXd a = prior.chol[c].solve_t(v).transpose();
    Eigen::VectorXd raw = (s2 - v.colwise().squaredNorm().array()).matrix();
    if (raw.minCoeff() < -1e-8 * s2)
      throw std::runtime_error("project: conditional variance went negative beyond tolerance");
    p.coeff.push_back(std::move(a));
    p.residual.push_back(raw.cwiseMax(0.0));
    p.residual_raw.push_back(std::move(raw));
    p.cross_gram.push_back(b);
    p.whitened.push_back(std::move(v));
  }
  return p;
}

// Gradient accumulator for everything that feeds a Gram matrix.
struct LatentGrads {
  std::vector<Eigen::VectorXd> z;
  std::vector<KernelParamGrad> kernel;

  static LatentGrads zeros(const InducingSet& inducing) {
    LatentGrads g;
    for (const auto& zc : inducing.locations) {
      g.z.push_back(Eigen::VectorXd::Zero(zc.size()));
      g.kernel.push_back({});
    }
    return g;
  }

  void scale_all(double a) {
    for (auto& v : z) v *= a;
    for (auto& k : kernel) k *= a;
  }
};

// Reverse-mode map of project(): pulls gradients w.r.t. coeff and the clamped
// residual back onto inducing locations and kernel hyperparameters.
inline LatentGrads projection_pullback(const InducingSet& inducing,
                                       const std::vector<SqExpKernel>& kernels,
                                       const InducingPrior& prior, const Eigen::MatrixXd& x,
                                       const Projection& proj,
                                       const std::vector<Eigen::MatrixXd>& coeff_bar,
                                       const std::vector<Eigen::VectorXd>& residual_bar) {
  LatentGrads g = LatentGrads::zeros(inducing);
  for (int c = 0; c < inducing.n_latents(); ++c) {
    const auto& chol = prior.chol[c];
    const Eigen::MatrixXd& v = proj.whitened[c];
    const Eigen::MatrixXd w = proj.coeff[c].transpose();  // W = L^{-T} V

    // clamp: zero gradient where the raw residual was negative
    Eigen::VectorXd rbar = residual_bar[c];
    for (Eigen::Index i = 0; i < rbar.size(); ++i)
      if (proj.residual_raw[c][i] < 0.0) rbar[i] = 0.0;

    // r = s^2 - colsq(V)
    g.kernel[c].d_log_variance += kernels[c].variance() * rbar.sum();
    Eigen::MatrixXd vbar = v * (-2.0 * rbar).asDiagonal();

    // W = L^{-T} V
    const Eigen::MatrixXd vbar_from_w = chol.solve(coeff_bar[c].transpose());
    Eigen::MatrixXd lbar = -w * vbar_from_w.transpose();
    vbar += vbar_from_w;

    // V = L^{-1} B^T
    const Eigen::MatrixXd tmp = chol.solve_t(vbar);
    lbar.noalias() -= tmp * v.transpose();
    const Eigen::MatrixXd bbar = tmp.transpose();

    const Eigen::MatrixXd kbar = cholesky_pullback(chol.L, lbar);
    g.kernel[c] += gram_pullback(kernels[c], inducing.locations[c], prior.gram[c], kbar, g.z[c]);
    g.kernel[c] += cross_gram_pullback(kernels[c], x.col(c), inducing.locations[c],
                                       proj.cross_gram[c], bbar, g.z[c]);
  }
  return g;
}

// Chains gradients w.r.t. the (jittered) prior Gram matrices into inducing
// locations and kernel hyperparameters. Used by the KL term.
inline void add_gram_pullback(LatentGrads& g, const InducingSet& inducing,
                              const std::vector<SqExpKernel>& kernels, const InducingPrior& prior,
                              const std::vector<Eigen::MatrixXd>& gram_bar, double weight) {
  for (int c = 0; c < inducing.n_latents(); ++c) {
    Eigen::VectorXd zb = Eigen::VectorXd::Zero(inducing.count(c));
    KernelParamGrad kp = gram_pullback(kernels[c], inducing.locations[c], prior.gram[c],
                                       gram_bar[c], zb);
    kp *= weight;
    g.kernel[c] += kp;
    g.z[c] += weight * zb;
  }
}

}  // namespace cgp
