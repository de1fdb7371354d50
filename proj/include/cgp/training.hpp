/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "cgp/data.hpp"
#include "cgp/errors.hpp"
#include "cgp/inducing.hpp"
#include "cgp/kernel.hpp"
#include "cgp/likelihood.hpp"
#include "cgp/posterior.hpp"
#include "cgp/random.hpp"

namespace cgp {

enum class PosteriorStructure { Coupled, MeanField };

// Everything the optimizer is allowed to move: kernel hyperparameters,
// inducing locations and the variational posterior. The mean-field variant
// is the same container with the cross-latent scale blocks pinned at zero.
struct ModelState {
  std::vector<SqExpKernel> kernels;
  InducingSet inducing;
  CoupledGaussian q;
  PosteriorStructure structure = PosteriorStructure::Coupled;
};

inline ModelState initial_state(const std::vector<SqExpKernel>& kernels,
                                const InducingSet& inducing,
                                PosteriorStructure structure = PosteriorStructure::Coupled) {
  ModelState s;
  s.kernels = kernels;
  s.inducing = inducing;
  s.structure = structure;
  s.q = CoupledGaussian::prior_init(build_prior(inducing, kernels));
  return s;
}

struct TrainConfig {
  int iterations = 5000;
  double learning_rate = 1e-2;
  double lr_decay = 1.0;  // per-iteration multiplier on the learning rate
  int batch_size = 0;     // 0 means full batch
  int n_mc = 1;
  std::uint64_t seed = 0;
  bool optimize_inducing = true;
  bool optimize_hypers = false;
  int eval_every = 100;
  // Quasi-Newton refinement after the stochastic stage. Runs only when the
  // bound is deterministic (Gaussian likelihood, evaluated full batch); the
  // direct parameterization of q leaves the landscape too ill-conditioned
  // near saturation for first-order steps alone.
  int polish_iterations = 4000;

  void validate(int n) const {
    if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations < 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) throw std::invalid_argument("TrainConfig: bad lr_decay");
    if (batch_size > n) throw std::invalid_argument("TrainConfig: batch_size exceeds data size");
    if (n_mc < 1) throw std::invalid_argument("TrainConfig: n_mc < 1");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every < 1");
    if (polish_iterations < 0) throw std::invalid_argument("TrainConfig: polish_iterations < 0");
  }
};

inline std::vector<int> full_batch(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

namespace detail {

// Batched pieces shared by the bound and its gradient. row i of proj_scale[c]
// is a_c(i)^T R_c with R_c the scale row strip, so covariances between
// latents reduce to row dot products.
struct ElboForward {
  Projection proj;
  std::vector<Eigen::MatrixXd> proj_scale;  // G_c = A_c R_c, n x D
  std::vector<Eigen::VectorXd> proj_mean;   // A_c mu_c, n
  Eigen::MatrixXd x_batch;
  Eigen::VectorXd y_batch;
};

inline ElboForward elbo_forward(const ModelState& state, const InducingPrior& prior,
                                const Dataset& data, const std::vector<int>& batch) {
  ElboForward f;
  const int b = static_cast<int>(batch.size());
  f.x_batch.resize(b, data.n_latents());
  f.y_batch.resize(b);
  for (int i = 0; i < b; ++i) {
    f.x_batch.row(i) = data.x.row(batch[i]);
    f.y_batch[i] = data.y[batch[i]];
  }
  f.proj = project(state.inducing, state.kernels, prior, f.x_batch);
  for (int c = 0; c < state.q.n_latents(); ++c) {
    f.proj_scale.push_back(f.proj.coeff[c] * state.q.scale_rows(c));
    f.proj_mean.push_back(f.proj.coeff[c] * state.q.mean_block(c));
  }
  return f;
}

inline Marginal marginal_at(const ElboForward& f, int n_latents, int i) {
  Marginal m;
  m.mean.resize(n_latents);
  m.cov.resize(n_latents, n_latents);
  for (int c = 0; c < n_latents; ++c) {
    m.mean[c] = f.proj_mean[c][i];
    for (int cp = 0; cp <= c; ++cp) {
      double s = f.proj_scale[c].row(i).dot(f.proj_scale[cp].row(i));
      if (c == cp) s += f.proj.residual[c][i];
      m.cov(c, cp) = s;
      m.cov(cp, c) = s;
    }
  }
  return m;
}

}  // namespace detail

// The bound: (N/|batch|) sum_i E_q[log p(y_i | F_i)] - KL[q(U) || p(U)].
// The rescaling makes minibatch estimates unbiased for the full sum.
inline double elbo(const ModelState& state, const Dataset& data, const LikelihoodSpec& spec,
                   const std::vector<int>& batch, int n_mc, const NoiseStream& stream) {
  if (batch.empty()) throw std::invalid_argument("elbo: empty batch");
  const InducingPrior prior = build_prior(state.inducing, state.kernels);
  const detail::ElboForward f = detail::elbo_forward(state, prior, data, batch);
  const int n_latents = state.q.n_latents();
  double expectation = 0.0;
  for (int i = 0; i < static_cast<int>(batch.size()); ++i) {
    const Marginal m = detail::marginal_at(f, n_latents, i);
    expectation += likelihood_head(f.y_batch[i], m.mean, m.cov, spec, n_mc, stream,
                                   static_cast<std::uint64_t>(batch[i]));
  }
  const double scale = static_cast<double>(data.size()) / static_cast<double>(batch.size());
  return scale * expectation - kl_to_prior(state.q, prior);
}

inline double elbo(const ModelState& state, const Dataset& data, const LikelihoodSpec& spec) {
  return elbo(state, data, spec, full_batch(data.size()), 1, NoiseStream(0));
}

struct ElboGradient {
  double value = 0.0;
  Eigen::VectorXd mean_bar;
  Eigen::MatrixXd scale_bar;  // lower triangular, w.r.t. raw scale entries
  LatentGrads latent;         // inducing locations and log-hyperparameters
};

// Reverse-mode gradient of the bound for all free parameters. The chain runs
// heads -> (marginal mean/cov) -> (projection, posterior parameters)
// -> (Cholesky, Gram matrices) -> (locations, log-hyperparameters).
inline ElboGradient elbo_gradient(const ModelState& state, const Dataset& data,
                                  const LikelihoodSpec& spec, const std::vector<int>& batch,
                                  int n_mc, const NoiseStream& stream) {
  if (batch.empty()) throw std::invalid_argument("elbo_gradient: empty batch");
  const InducingPrior prior = build_prior(state.inducing, state.kernels);
  const detail::ElboForward f = detail::elbo_forward(state, prior, data, batch);
  const int n_latents = state.q.n_latents();
  const int b = static_cast<int>(batch.size());
  const int dim = state.q.dim();
  const double rescale = static_cast<double>(data.size()) / static_cast<double>(b);

  // per-point heads
  double expectation = 0.0;
  std::vector<Eigen::VectorXd> dmean(n_latents, Eigen::VectorXd::Zero(b));
  std::vector<std::vector<Eigen::VectorXd>> dcov(n_latents);  // dcov[c][cp], cp <= c
  for (int c = 0; c < n_latents; ++c)
    for (int cp = 0; cp <= c; ++cp) dcov[c].push_back(Eigen::VectorXd::Zero(b));
  for (int i = 0; i < b; ++i) {
    const Marginal m = detail::marginal_at(f, n_latents, i);
    const LoglikGrads head = likelihood_head_grads(f.y_batch[i], m.mean, m.cov, spec, n_mc,
                                                   stream, static_cast<std::uint64_t>(batch[i]));
    expectation += head.value;
    for (int c = 0; c < n_latents; ++c) {
      dmean[c][i] = head.d_mean[c];
      for (int cp = 0; cp <= c; ++cp) dcov[c][cp][i] = head.d_cov(c, cp);
    }
  }

  ElboGradient g;
  g.mean_bar = Eigen::VectorXd::Zero(dim);
  // Row strip c of sigma_bar_scale accumulates (dE/dSigma) * scale, since
  // G_cp already carries the scale strip; the scale gradient is twice its
  // lower triangle.
  Eigen::MatrixXd sigma_bar_scale = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<Eigen::MatrixXd> coeff_bar;
  std::vector<Eigen::VectorXd> residual_bar;

  for (int c = 0; c < n_latents; ++c) {
    const int off = prior.offset[c];
    const int m_c = state.q.block_dim[c];
    g.mean_bar.segment(off, m_c) = f.proj.coeff[c].transpose() * dmean[c];

    // H_c = sum_cp diag(dS_ccp) G_cp feeds both coeff_bar and the scale chain
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(b, dim);
    for (int cp = 0; cp < n_latents; ++cp) {
      const Eigen::VectorXd& w = cp <= c ? dcov[c][cp] : dcov[cp][c];
      h += w.asDiagonal() * f.proj_scale[cp];
    }
    sigma_bar_scale.middleRows(off, m_c) = f.proj.coeff[c].transpose() * h;

    Eigen::MatrixXd a_bar = dmean[c] * state.q.mean_block(c).transpose();
    a_bar.noalias() += 2.0 * h * state.q.scale_rows(c).transpose();
    coeff_bar.push_back(std::move(a_bar));
    residual_bar.push_back(dcov[c][c]);
  }

  Eigen::MatrixXd scale_bar_lik = 2.0 * sigma_bar_scale.triangularView<Eigen::Lower>().toDenseMatrix();

  g.latent = projection_pullback(state.inducing, state.kernels, prior, f.x_batch, f.proj,
                                 coeff_bar, residual_bar);
  g.latent.scale_all(rescale);
  g.mean_bar *= rescale;
  scale_bar_lik *= rescale;

  const KlGrads kl = kl_gradients(state.q, prior);
  g.mean_bar -= kl.mean_bar;
  g.scale_bar = scale_bar_lik - kl.scale_bar;
  add_gram_pullback(g.latent, state.inducing, state.kernels, prior, kl.gram_bar, -1.0);

  g.value = rescale * expectation - kl_to_prior(state.q, prior);
  return g;
}

// --- parameter packing -----------------------------------------------------
//
// Flat layout: mean, then the lower-triangular scale (log diagonal, raw
// off-diagonals; mean-field keeps only same-block entries), then inducing
// locations and log-hyperparameters when enabled.

namespace detail {

inline std::vector<int> block_of(const CoupledGaussian& q) {
  std::vector<int> blk(q.dim());
  int at = 0;
  for (int c = 0; c < q.n_latents(); ++c)
    for (int j = 0; j < q.block_dim[c]; ++j) blk[at++] = c;
  return blk;
}

template <typename Fn>
inline void for_each_scale_entry(const ModelState& s, Fn&& fn) {
  const std::vector<int> blk = block_of(s.q);
  for (int i = 0; i < s.q.dim(); ++i)
    for (int j = 0; j <= i; ++j) {
      if (s.structure == PosteriorStructure::MeanField && blk[i] != blk[j]) continue;
      fn(i, j);
    }
}

}  // namespace detail

inline int count_parameters(const ModelState& s, const TrainConfig& cfg) {
  int n = s.q.dim();
  detail::for_each_scale_entry(s, [&](int, int) { ++n; });
  if (cfg.optimize_inducing) n += s.inducing.total();
  if (cfg.optimize_hypers) n += 2 * static_cast<int>(s.kernels.size());
  return n;
}

inline Eigen::VectorXd pack_parameters(const ModelState& s, const TrainConfig& cfg) {
  Eigen::VectorXd th(count_parameters(s, cfg));
  int at = 0;
  th.head(s.q.dim()) = s.q.mean;
  at += s.q.dim();
  detail::for_each_scale_entry(s, [&](int i, int j) {
    th[at++] = i == j ? std::log(s.q.scale(i, i)) : s.q.scale(i, j);
  });
  if (cfg.optimize_inducing)
    for (const auto& z : s.inducing.locations) {
      th.segment(at, z.size()) = z;
      at += static_cast<int>(z.size());
    }
  if (cfg.optimize_hypers)
    for (const auto& k : s.kernels) {
      th[at++] = k.log_variance;
      th[at++] = k.log_lengthscale;
    }
  return th;
}

inline void unpack_parameters(const Eigen::VectorXd& th, ModelState& s, const TrainConfig& cfg) {
  int at = 0;
  s.q.mean = th.head(s.q.dim());
  at += s.q.dim();
  detail::for_each_scale_entry(s, [&](int i, int j) {
    s.q.scale(i, j) = i == j ? std::exp(th[at]) : th[at];
    ++at;
  });
  if (cfg.optimize_inducing)
    for (auto& z : s.inducing.locations) {
      z = th.segment(at, z.size());
      at += static_cast<int>(z.size());
    }
  if (cfg.optimize_hypers)
    for (auto& k : s.kernels) {
      k.log_variance = th[at++];
      k.log_lengthscale = th[at++];
    }
}

inline Eigen::VectorXd pack_gradient(const ElboGradient& g, const ModelState& s,
                                     const TrainConfig& cfg) {
  Eigen::VectorXd out(count_parameters(s, cfg));
  int at = 0;
  out.head(s.q.dim()) = g.mean_bar;
  at += s.q.dim();
  detail::for_each_scale_entry(s, [&](int i, int j) {
    // chain through the log parameterization on the diagonal
    out[at++] = i == j ? g.scale_bar(i, i) * s.q.scale(i, i) : g.scale_bar(i, j);
  });
  if (cfg.optimize_inducing)
    for (const auto& z : g.latent.z) {
      out.segment(at, z.size()) = z;
      at += static_cast<int>(z.size());
    }
  if (cfg.optimize_hypers)
    for (const auto& k : g.latent.kernel) {
      out[at++] = k.d_log_variance;
      out[at++] = k.d_log_lengthscale;
    }
  return out;
}

// --- optimization ------------------------------------------------------------

struct TraceEntry {
  int iteration = 0;
  double elbo = 0.0;
  double best = 0.0;
};

struct TrainResult {
  ModelState state;
  std::vector<TraceEntry> trace;
};

namespace detail {

inline std::vector<int> sample_batch(int n, int batch_size, std::uint64_t seed,
                                     std::uint64_t iteration) {
  if (batch_size <= 0 || batch_size >= n) return full_batch(n);
  SequentialRng rng(mix64(seed) ^ iteration);
  std::vector<int> idx = full_batch(n);
  for (int j = 0; j < batch_size; ++j) {
    const int pick = j + rng.uniform_int(n - j);
    std::swap(idx[j], idx[pick]);
  }
  idx.resize(batch_size);
  return idx;
}

// Limited-memory BFGS minimizer with a strong-Wolfe line search. The
// curvature condition is what keeps the inverse-Hessian pairs informative on
// badly conditioned problems; plain backtracking degrades to gradient
// descent there. Exceptions from the callbacks count as infinite values.
template <typename ValueGradFn>
Eigen::VectorXd lbfgs_minimize(const ValueGradFn& value_grad_fn, Eigen::VectorXd x, int max_iter,
                               int memory = 30) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto eval = [&](const Eigen::VectorXd& p, double& f, Eigen::VectorXd& g) {
    try {
      value_grad_fn(p, f, g);
      if (!std::isfinite(f)) f = inf;
    } catch (const std::exception&) {
      f = inf;
      g.setZero(p.size());
    }
  };

  double f;
  Eigen::VectorXd g(x.size());
  eval(x, f, g);
  if (!std::isfinite(f)) return x;
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;

  const double c1 = 1e-4, c2 = 0.9;
  int stalled = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (g.cwiseAbs().maxCoeff() < 1e-12) break;

    // two-loop recursion
    Eigen::VectorXd q = g;
    const int k = static_cast<int>(s_hist.size());
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (k > 0) q *= s_hist[k - 1].dot(y_hist[k - 1]) / y_hist[k - 1].squaredNorm();
    for (int i = 0; i < k; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd direction = -q;
    double slope0 = direction.dot(g);
    if (!(slope0 < 0.0)) {  // fall back to steepest descent
      direction = -g;
      slope0 = -g.squaredNorm();
    }

    // strong-Wolfe search: bracket by expansion, then bisect
    const auto probe = [&](double t, double& ft, Eigen::VectorXd& gt, double& st) {
      eval(x + t * direction, ft, gt);
      st = std::isfinite(ft) ? gt.dot(direction) : inf;
    };
    double lo = 0.0, f_lo = f;
    double hi = -1.0, t = 1.0;
    double f_t = inf, slope_t = inf;
    Eigen::VectorXd g_t(x.size());
    bool found = false;
    double t_prev = 0.0, f_prev = f;
    for (int expand = 0; expand < 20; ++expand) {
      probe(t, f_t, g_t, slope_t);
      if (f_t > f + c1 * t * slope0 || (expand > 0 && f_t >= f_prev)) {
        lo = t_prev;
        f_lo = f_prev;
        hi = t;
        break;
      }
      if (std::abs(slope_t) <= -c2 * slope0) {
        found = true;
        break;
      }
      if (slope_t >= 0.0) {
        lo = t;
        f_lo = f_t;
        hi = t_prev;
        break;
      }
      t_prev = t;
      f_prev = f_t;
      t *= 2.5;
    }
    if (!found && hi >= 0.0) {
      for (int zoom = 0; zoom < 30; ++zoom) {
        t = 0.5 * (lo + hi);
        probe(t, f_t, g_t, slope_t);
        if (f_t > f + c1 * t * slope0 || f_t >= f_lo) {
          hi = t;
          continue;
        }
        if (std::abs(slope_t) <= -c2 * slope0) {
          found = true;
          break;
        }
        if (slope_t * (hi - lo) >= 0.0) hi = lo;
        lo = t;
        f_lo = f_t;
      }
      // a zoom that ran out of splits still yields a sufficient-decrease point
      found = found || (std::isfinite(f_t) && f_t < f);
    }
    if (!found || !std::isfinite(f_t)) {
      // stale curvature pairs can produce unusable directions; drop them
      // once and continue from steepest descent before giving up
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }

    const Eigen::VectorXd x_new = x + t * direction;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_t - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    const double decrease = f - f_t;
    x = x_new;
    f = f_t;
    g = g_t;
    stalled = decrease < 1e-14 * (1.0 + std::abs(f)) ? stalled + 1 : 0;
    if (stalled >= 8) break;
  }
  return x;
}

}  // namespace detail

// Stochastic gradient ascent with adaptive moments. Checkpoints the best
// state seen at periodic full-batch evaluations; the returned state is that
// checkpoint, not the last iterate.
inline TrainResult optimize(const ModelState& initial, const Dataset& data,
                            const LikelihoodSpec& spec, const TrainConfig& cfg) {
  cfg.validate(data.size());
  const bool gaussian = std::holds_alternative<GaussianLikelihood>(spec);
  const NoiseStream eval_stream(mix64(cfg.seed ^ 0xE7A1ULL));
  const std::vector<int> everything = full_batch(data.size());

  const auto evaluate = [&](const ModelState& s) {
    return elbo(s, data, spec, everything, gaussian ? 1 : cfg.n_mc, eval_stream);
  };

  TrainResult result;
  result.state = initial;
  double best = evaluate(result.state);
  if (!std::isfinite(best)) throw Diverged("optimize: initial bound not finite");
  ModelState current = initial;
  result.trace.push_back({0, best, best});

  Eigen::VectorXd th = pack_parameters(current, cfg);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(th.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(th.size());
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double beta1_pow = 1.0, beta2_pow = 1.0;
  double lr = cfg.learning_rate;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::vector<int> batch =
        detail::sample_batch(data.size(), cfg.batch_size, cfg.seed, it);
    const NoiseStream stream(cfg.seed, static_cast<std::uint64_t>(it));
    const ElboGradient grad = elbo_gradient(current, data, spec, batch, cfg.n_mc, stream);
    const Eigen::VectorXd g = pack_gradient(grad, current, cfg);

    beta1_pow *= beta1;
    beta2_pow *= beta2;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    lr *= cfg.lr_decay;
    th += (lr / (1.0 - beta1_pow)) *
          (m.array() / ((v.array() / (1.0 - beta2_pow)).sqrt() + eps)).matrix();
    unpack_parameters(th, current, cfg);

    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      const double e = evaluate(current);
      if (!std::isfinite(e)) throw Diverged("optimize: bound became non-finite");
      if (e > best) {
        best = e;
        result.state = current;
      }
      result.trace.push_back({it, e, best});
    }
  }

  // deterministic refinement from the best checkpoint
  if (cfg.polish_iterations > 0 && gaussian && cfg.iterations > 0) {
    ModelState polished = result.state;
    const auto value_grad_fn = [&](const Eigen::VectorXd& p, double& f, Eigen::VectorXd& g) {
      ModelState s = result.state;
      unpack_parameters(p, s, cfg);
      const ElboGradient eg = elbo_gradient(s, data, spec, everything, 1, eval_stream);
      f = -eg.value;
      g = -pack_gradient(eg, s, cfg);
    };
    const Eigen::VectorXd refined = detail::lbfgs_minimize(
        value_grad_fn, pack_parameters(result.state, cfg), cfg.polish_iterations, 100);
    unpack_parameters(refined, polished, cfg);
    const double e = evaluate(polished);
    if (std::isfinite(e) && e > best) {
      best = e;
      result.state = std::move(polished);
    }
    result.trace.push_back({cfg.iterations, best, best});
  }
  return result;
}

}  // namespace cgp
