/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cgp/data.hpp"
#include "cgp/errors.hpp"
#include "cgp/kernel.hpp"
#include "cgp/posterior.hpp"
#include "cgp/random.hpp"

namespace cgp {

// Additive Gaussian regression y = sum_c f_c(x_c) + noise. Evidence and the
// full coupled posterior over all latents are closed-form here, which makes
// this model the ground truth that the variational approximations are
// judged against.
struct AdditiveExactModel {
  std::vector<SqExpKernel> kernels;
  double noise_std = 1.0;
  Dataset data;
  Eigen::MatrixXd chol_l;  // chol(K_sum + sigma^2 I)
  Eigen::VectorXd alpha;   // (K_sum + sigma^2 I)^{-1} y
};

inline AdditiveExactModel build_exact_model(const std::vector<SqExpKernel>& kernels,
                                            double noise_std, const Dataset& data) {
  data.validate();
  if (static_cast<int>(kernels.size()) != data.n_latents())
    throw std::invalid_argument("build_exact_model: one kernel per latent required");
  if (!(noise_std > 0.0)) throw std::invalid_argument("build_exact_model: noise_std must be positive");

  const int n = data.size();
  Eigen::MatrixXd k_sum = Eigen::MatrixXd::Zero(n, n);
  for (int c = 0; c < data.n_latents(); ++c) k_sum += gram(kernels[c], data.x.col(c), data.x.col(c));
  k_sum.diagonal().array() += noise_std * noise_std;

  Eigen::LLT<Eigen::MatrixXd> llt(k_sum);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailed("build_exact_model: K_sum + sigma^2 I not factorizable");

  AdditiveExactModel model;
  model.kernels = kernels;
  model.noise_std = noise_std;
  model.data = data;
  model.chol_l = llt.matrixL();
  model.alpha = llt.solve(data.y);
  return model;
}

// log N(y; 0, K_sum + sigma^2 I)
inline double exact_log_evidence(const AdditiveExactModel& model) {
  const int n = model.data.size();
  const double log_det = 2.0 * model.chol_l.diagonal().array().log().sum();
  return -0.5 * (model.data.y.dot(model.alpha) + log_det + n * std::log(2.0 * M_PI));
}

// Joint posterior over all latents at the test inputs (column c of xstar is
// latent c's input). cov is (C n*) x (C n*) in latent-major order:
//   E[f_c(x*)]            = k_c(x*, X_c) (K_sum + s^2 I)^{-1} y
//   Cov(f_c(x), f_c'(x')) = d_cc' k_c(x, x') - k_c(x, X_c) (...)^{-1} k_c'(X_c', x')
struct ExactPosterior {
  std::vector<Eigen::VectorXd> mean;
  Eigen::MatrixXd cov;
  int n_points = 0;
  int n_latents = 0;

  // same-point C x C covariance block
  Marginal point_marginal(int i) const {
    Marginal m;
    m.mean.resize(n_latents);
    m.cov.resize(n_latents, n_latents);
    for (int c = 0; c < n_latents; ++c) {
      m.mean[c] = mean[c][i];
      for (int cp = 0; cp < n_latents; ++cp)
        m.cov(c, cp) = cov(c * n_points + i, cp * n_points + i);
    }
    return m;
  }
};

inline ExactPosterior exact_posterior(const AdditiveExactModel& model,
                                      const Eigen::MatrixXd& xstar) {
  const int n_latents = model.data.n_latents();
  if (xstar.cols() != n_latents)
    throw std::invalid_argument("exact_posterior: test inputs need one column per latent");
  const int ns = static_cast<int>(xstar.rows());

  ExactPosterior post;
  post.n_points = ns;
  post.n_latents = n_latents;
  post.cov.resize(n_latents * ns, n_latents * ns);

  std::vector<Eigen::MatrixXd> whitened;  // L^{-1} k_c(X_c, x*), N x n*
  for (int c = 0; c < n_latents; ++c) {
    const Eigen::MatrixXd kx = gram(model.kernels[c], xstar.col(c), model.data.x.col(c));
    post.mean.push_back(kx * model.alpha);
    whitened.push_back(
        model.chol_l.triangularView<Eigen::Lower>().solve(kx.transpose()));
  }
  for (int c = 0; c < n_latents; ++c) {
    for (int cp = 0; cp <= c; ++cp) {
      Eigen::MatrixXd block = -whitened[c].transpose() * whitened[cp];
      if (c == cp) block += gram(model.kernels[c], xstar.col(c), xstar.col(c));
      post.cov.block(c * ns, cp * ns, ns, ns) = block;
      post.cov.block(cp * ns, c * ns, ns, ns) = block.transpose();
    }
  }
  return post;
}

// --- derivative-free evidence maximization ----------------------------------

namespace detail {

struct SimplexResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
};

// Standard Nelder-Mead on a function to be minimized.
inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, double step, int max_iter,
                                 double ftol) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int i = 1; i <= n; ++i) xs[i][i - 1] += step;
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  std::vector<int> order(n + 1);
  for (int it = 0; it < max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    const int best = order[0], worst = order[n], second_worst = order[n - 1];
    if (std::isfinite(fs[best]) && std::isfinite(fs[worst]) && fs[worst] - fs[best] < ftol) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += xs[i];
    centroid /= n;

    const Eigen::VectorXd reflected = centroid + (centroid - xs[worst]);
    const double f_ref = f(reflected);
    if (f_ref < fs[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - xs[worst]);
      const double f_exp = f(expanded);
      if (f_exp < f_ref) {
        xs[worst] = expanded;
        fs[worst] = f_exp;
      } else {
        xs[worst] = reflected;
        fs[worst] = f_ref;
      }
      continue;
    }
    if (f_ref < fs[second_worst]) {
      xs[worst] = reflected;
      fs[worst] = f_ref;
      continue;
    }
    const Eigen::VectorXd contracted =
        f_ref < fs[worst] ? centroid + 0.5 * (reflected - centroid)
                          : centroid + 0.5 * (xs[worst] - centroid);
    const double f_con = f(contracted);
    if (f_con < std::min(f_ref, fs[worst])) {
      xs[worst] = contracted;
      fs[worst] = f_con;
      continue;
    }
    for (int i = 0; i <= n; ++i) {  // shrink toward the best vertex
      if (i == best) continue;
      xs[i] = xs[best] + 0.5 * (xs[i] - xs[best]);
      fs[i] = f(xs[i]);
    }
  }

  SimplexResult out;
  for (int i = 0; i <= n; ++i)
    if (fs[i] < out.value) {
      out.value = fs[i];
      out.x = xs[i];
    }
  if (!out.x.size()) out.x = x0;
  return out;
}

}  // namespace detail

struct HyperFit {
  std::vector<SqExpKernel> kernels;
  double noise_std = 0.0;
  double log_evidence = -std::numeric_limits<double>::infinity();
};

// Maximizes the exact evidence over log(s_c^2), log(l_c) and log(sigma) with
// a simplex search restarted from jittered copies of the initial point. The
// returned evidence never falls below the initial point's.
inline HyperFit fit_hyperparameters(const Dataset& data, const std::vector<SqExpKernel>& init,
                                    double init_noise_std, std::uint64_t seed = 0,
                                    int restarts = 3, int max_iter = 400) {
  data.validate();
  const int n_latents = data.n_latents();
  if (static_cast<int>(init.size()) != n_latents)
    throw std::invalid_argument("fit_hyperparameters: one kernel per latent required");
  if (!(init_noise_std > 0.0))
    throw std::invalid_argument("fit_hyperparameters: init noise must be positive");

  const auto unpack = [&](const Eigen::VectorXd& th) {
    std::vector<SqExpKernel> ks(n_latents);
    for (int c = 0; c < n_latents; ++c) ks[c] = SqExpKernel{th[2 * c], th[2 * c + 1]};
    return std::make_pair(ks, std::exp(th[2 * n_latents]));
  };
  const auto objective = [&](const Eigen::VectorXd& th) {
    try {
      const auto [ks, sigma] = unpack(th);
      const double ev = exact_log_evidence(build_exact_model(ks, sigma, data));
      return std::isfinite(ev) ? -ev : std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd th0(2 * n_latents + 1);
  for (int c = 0; c < n_latents; ++c) {
    th0[2 * c] = init[c].log_variance;
    th0[2 * c + 1] = init[c].log_lengthscale;
  }
  th0[2 * n_latents] = std::log(init_noise_std);

  detail::SimplexResult best;
  best.x = th0;
  best.value = objective(th0);

  SequentialRng rng(mix64(seed ^ 0xF17ULL));
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start = th0;
    if (r > 0)
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += 0.3 * rng.normal();
    const detail::SimplexResult res = detail::nelder_mead(objective, start, 0.4, max_iter, 1e-9);
    if (res.value < best.value) best = res;
  }
  if (!std::isfinite(best.value))
    throw OptimizationFailed("fit_hyperparameters: no restart produced a finite evidence");

  HyperFit fit;
  std::tie(fit.kernels, fit.noise_std) = unpack(best.x);
  fit.log_evidence = -best.value;
  return fit;
}

}  // namespace cgp
