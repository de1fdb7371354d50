/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace cgp {

// Squared-exponential kernel k(x, x') = s^2 exp(-(x - x')^2 / (2 l^2)).
// Hyperparameters live in log space so optimizers can move unconstrained;
// positivity of s^2 and l is automatic.
struct SqExpKernel {
  double log_variance = 0.0;     // log s^2
  double log_lengthscale = 0.0;  // log l

  static SqExpKernel from_params(double variance, double lengthscale) {
    if (!(variance > 0.0) || !(lengthscale > 0.0))
      throw std::invalid_argument("SqExpKernel: variance and lengthscale must be positive");
    return {std::log(variance), std::log(lengthscale)};
  }

  double variance() const { return std::exp(log_variance); }
  double lengthscale() const { return std::exp(log_lengthscale); }

  double operator()(double x, double xp) const {
    const double d = x - xp;
    const double l = lengthscale();
    return variance() * std::exp(-d * d / (2.0 * l * l));
  }
};

inline Eigen::MatrixXd gram(const SqExpKernel& k, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& xp) {
  const double s2 = k.variance();
  const double inv_2l2 = 0.5 / (k.lengthscale() * k.lengthscale());
  Eigen::MatrixXd out(x.size(), xp.size());
  for (Eigen::Index j = 0; j < xp.size(); ++j)
    out.col(j) = (s2 * (-(x.array() - xp[j]).square() * inv_2l2).exp()).matrix();
  return out;
}

// Entry-wise partials of gram(k, x, xp).
// d_first_arg(i, j) = d k(x_i, xp_j) / d x_i; the entry does not depend on
// any other component of x, so this matrix is the whole Jacobian structure.
struct GramGrads {
  Eigen::MatrixXd d_log_variance;
  Eigen::MatrixXd d_log_lengthscale;
  Eigen::MatrixXd d_first_arg;
};

inline GramGrads gram_grads(const SqExpKernel& k, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& xp) {
  const double l2 = k.lengthscale() * k.lengthscale();
  const Eigen::MatrixXd kmat = gram(k, x, xp);
  Eigen::MatrixXd diff(x.size(), xp.size());
  for (Eigen::Index j = 0; j < xp.size(); ++j) diff.col(j) = (x.array() - xp[j]).matrix();
  GramGrads g;
  g.d_log_variance = kmat;
  g.d_log_lengthscale = (kmat.array() * diff.array().square() / l2).matrix();
  g.d_first_arg = (-kmat.array() * diff.array() / l2).matrix();
  return g;
}

struct KernelParamGrad {
  double d_log_variance = 0.0;
  double d_log_lengthscale = 0.0;

  KernelParamGrad& operator+=(const KernelParamGrad& o) {
    d_log_variance += o.d_log_variance;
    d_log_lengthscale += o.d_log_lengthscale;
    return *this;
  }
  KernelParamGrad& operator*=(double a) {
    d_log_variance *= a;
    d_log_lengthscale *= a;
    return *this;
  }
};

// Reverse-mode chain through K = gram(k, z, z) (+ optional diagonal jitter
// proportional to the variance; pass that K so the variance chain includes
// it). Accumulates location gradients into zbar.
inline KernelParamGrad gram_pullback(const SqExpKernel& k, const Eigen::VectorXd& z,
                                     const Eigen::MatrixXd& kmat, const Eigen::MatrixXd& kbar,
                                     Eigen::VectorXd& zbar) {
  const double l2 = k.lengthscale() * k.lengthscale();
  const Eigen::Index m = z.size();
  Eigen::MatrixXd diff(m, m);
  for (Eigen::Index j = 0; j < m; ++j) diff.col(j) = (z.array() - z[j]).matrix();

  KernelParamGrad g;
  const Eigen::ArrayXXd t = kbar.array() * kmat.array();
  g.d_log_variance = t.sum();
  g.d_log_lengthscale = (t * diff.array().square()).sum() / l2;

  // row m collects d k(z_m, z_j)/d z_m over both index positions
  const Eigen::ArrayXXd both = (kbar.array() + kbar.transpose().array()) * kmat.array();
  zbar.noalias() += (-(both * diff.array()).rowwise().sum() / l2).matrix();
  return g;
}

// Reverse-mode chain through B = gram(k, x, z) with x held fixed.
inline KernelParamGrad cross_gram_pullback(const SqExpKernel& k, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& z, const Eigen::MatrixXd& bmat,
                                           const Eigen::MatrixXd& bbar, Eigen::VectorXd& zbar) {
  const double l2 = k.lengthscale() * k.lengthscale();
  Eigen::MatrixXd diff(x.size(), z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) diff.col(j) = (x.array() - z[j]).matrix();

  KernelParamGrad g;
  const Eigen::ArrayXXd t = bbar.array() * bmat.array();
  g.d_log_variance = t.sum();
  g.d_log_lengthscale = (t * diff.array().square()).sum() / l2;
  zbar.noalias() += ((t * diff.array()).colwise().sum() / l2).matrix().transpose();
  return g;
}

}  // namespace cgp
