/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <variant>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cgp/errors.hpp"
#include "cgp/linalg.hpp"
#include "cgp/random.hpp"

namespace cgp {

// Gaussian observation noise around a linear combination of the latents:
// y ~ N(w^T F, noise_std^2). The expected log-likelihood under a Gaussian
// q(F(x)) is available in closed form for this case.
struct GaussianLikelihood {
  double noise_std = 1.0;
  Eigen::VectorXd weights;
};

// Arbitrary likelihood around an arbitrary combiner rho = combine(F).
// Derivative callbacks are optional; central differences fill in when they
// are absent.
struct GenericLikelihood {
  std::function<double(double y, double rho)> log_density;
  std::function<double(const Eigen::VectorXd& f)> combine;
  std::function<double(double y, double rho)> log_density_drho;        // optional
  std::function<Eigen::VectorXd(const Eigen::VectorXd& f)> combine_grad;  // optional
};

using LikelihoodSpec = std::variant<GaussianLikelihood, GenericLikelihood>;

// E_{F ~ N(m, S)}[ log N(y; w^T F, sigma^2) ]
//   = -1/2 log(2 pi sigma^2) - ((y - w^T m)^2 + w^T S w) / (2 sigma^2)
inline double expected_loglik_gaussian(double y, const Eigen::VectorXd& m,
                                       const Eigen::MatrixXd& s, const Eigen::VectorXd& w,
                                       double noise_std) {
  const double var = noise_std * noise_std;
  const double resid = y - w.dot(m);
  const double smear = w.dot(s * w);
  return -0.5 * std::log(2.0 * M_PI * var) - (resid * resid + smear) / (2.0 * var);
}

struct LoglikGrads {
  double value = 0.0;
  Eigen::VectorXd d_mean;
  Eigen::MatrixXd d_cov;       // symmetric, full-matrix convention
  double d_log_noise = 0.0;    // w.r.t. log(noise_std)
};

inline LoglikGrads expected_loglik_gaussian_grads(double y, const Eigen::VectorXd& m,
                                                  const Eigen::MatrixXd& s,
                                                  const Eigen::VectorXd& w, double noise_std) {
  const double var = noise_std * noise_std;
  const double resid = y - w.dot(m);
  const double smear = w.dot(s * w);
  LoglikGrads g;
  g.value = -0.5 * std::log(2.0 * M_PI * var) - (resid * resid + smear) / (2.0 * var);
  g.d_mean = (resid / var) * w;
  g.d_cov = (-0.5 / var) * (w * w.transpose());
  g.d_log_noise = -1.0 + (resid * resid + smear) / var;
  return g;
}

namespace detail {

inline double combine_value(const GenericLikelihood& lik, const Eigen::VectorXd& f) {
  return lik.combine(f);
}

inline Eigen::VectorXd combine_grad_or_fd(const GenericLikelihood& lik, const Eigen::VectorXd& f) {
  if (lik.combine_grad) return lik.combine_grad(f);
  Eigen::VectorXd g(f.size());
  for (Eigen::Index j = 0; j < f.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(f[j]));
    Eigen::VectorXd fp = f, fm = f;
    fp[j] += h;
    fm[j] -= h;
    g[j] = (lik.combine(fp) - lik.combine(fm)) / (2.0 * h);
  }
  return g;
}

inline double log_density_drho_or_fd(const GenericLikelihood& lik, double y, double rho) {
  if (lik.log_density_drho) return lik.log_density_drho(y, rho);
  const double h = 1e-6 * (1.0 + std::abs(rho));
  return (lik.log_density(y, rho + h) - lik.log_density(y, rho - h)) / (2.0 * h);
}

// Cholesky of S + 1e-10 I; S can be numerically semidefinite.
inline Eigen::MatrixXd sample_scale(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd shifted = 0.5 * (s + s.transpose());
  shifted.diagonal().array() += 1e-10;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailed("expected_loglik_mc: predictive covariance not factorizable");
  return llt.matrixL();
}

}  // namespace detail

// Monte Carlo estimate of the expected log-likelihood under N(m, S) using
// the location-scale form f = m + L eps with eps standard normal. Draws come
// from the counter-based stream, so the estimate is reproducible bit for bit
// given (stream, point).
inline double expected_loglik_mc(double y, const Eigen::VectorXd& m, const Eigen::MatrixXd& s,
                                 const LikelihoodSpec& spec, int n_samples,
                                 const NoiseStream& stream, std::uint64_t point = 0) {
  if (n_samples < 1) throw std::invalid_argument("expected_loglik_mc: need n_samples >= 1");
  const Eigen::MatrixXd l = detail::sample_scale(s);
  const int dim = static_cast<int>(m.size());
  double acc = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    const Eigen::VectorXd f = m + l * stream.normals(point, k, dim);
    double ld;
    if (const auto* gauss = std::get_if<GaussianLikelihood>(&spec)) {
      const double rho = gauss->weights.dot(f);
      const double var = gauss->noise_std * gauss->noise_std;
      ld = -0.5 * std::log(2.0 * M_PI * var) - (y - rho) * (y - rho) / (2.0 * var);
    } else {
      const auto& gen = std::get<GenericLikelihood>(spec);
      ld = gen.log_density(y, gen.combine(f));
    }
    if (!std::isfinite(ld)) throw DensityNotFinite("expected_loglik_mc: log-density not finite");
    acc += ld;
  }
  return acc / n_samples;
}

// Pathwise gradients of the MC estimate on the same fixed draw.
inline LoglikGrads expected_loglik_mc_grads(double y, const Eigen::VectorXd& m,
                                            const Eigen::MatrixXd& s, const LikelihoodSpec& spec,
                                            int n_samples, const NoiseStream& stream,
                                            std::uint64_t point = 0) {
  if (n_samples < 1) throw std::invalid_argument("expected_loglik_mc_grads: need n_samples >= 1");
  const Eigen::MatrixXd l = detail::sample_scale(s);
  const int dim = static_cast<int>(m.size());
  LoglikGrads g;
  g.d_mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd l_bar = Eigen::MatrixXd::Zero(dim, dim);
  for (int k = 0; k < n_samples; ++k) {
    const Eigen::VectorXd eps = stream.normals(point, k, dim);
    const Eigen::VectorXd f = m + l * eps;
    double ld;
    Eigen::VectorXd chain(dim);
    if (const auto* gauss = std::get_if<GaussianLikelihood>(&spec)) {
      const double rho = gauss->weights.dot(f);
      const double var = gauss->noise_std * gauss->noise_std;
      ld = -0.5 * std::log(2.0 * M_PI * var) - (y - rho) * (y - rho) / (2.0 * var);
      chain = ((y - rho) / var) * gauss->weights;
      g.d_log_noise += -1.0 + (y - rho) * (y - rho) / var;
    } else {
      const auto& gen = std::get<GenericLikelihood>(spec);
      const double rho = gen.combine(f);
      ld = gen.log_density(y, rho);
      chain = detail::log_density_drho_or_fd(gen, y, rho) * detail::combine_grad_or_fd(gen, f);
    }
    if (!std::isfinite(ld)) throw DensityNotFinite("expected_loglik_mc_grads: log-density not finite");
    g.value += ld;
    g.d_mean += chain;
    l_bar += chain * eps.transpose();
  }
  const double inv_n = 1.0 / n_samples;
  g.value *= inv_n;
  g.d_mean *= inv_n;
  g.d_log_noise *= inv_n;
  l_bar *= inv_n;
  g.d_cov = cholesky_pullback(l, l_bar);
  return g;
}

// Per-point expectation head used by the bound: closed form whenever the
// likelihood is Gaussian with a linear combiner, Monte Carlo otherwise.
inline LoglikGrads likelihood_head_grads(double y, const Eigen::VectorXd& m,
                                         const Eigen::MatrixXd& s, const LikelihoodSpec& spec,
                                         int n_mc, const NoiseStream& stream,
                                         std::uint64_t point) {
  if (const auto* gauss = std::get_if<GaussianLikelihood>(&spec))
    return expected_loglik_gaussian_grads(y, m, s, gauss->weights, gauss->noise_std);
  return expected_loglik_mc_grads(y, m, s, spec, n_mc, stream, point);
}

inline double likelihood_head(double y, const Eigen::VectorXd& m, const Eigen::MatrixXd& s,
                              const LikelihoodSpec& spec, int n_mc, const NoiseStream& stream,
                              std::uint64_t point) {
  if (const auto* gauss = std::get_if<GaussianLikelihood>(&spec))
    return expected_loglik_gaussian(y, m, s, gauss->weights, gauss->noise_std);
  return expected_loglik_mc(y, m, s, spec, n_mc, stream, point);
}

}  // namespace cgp
