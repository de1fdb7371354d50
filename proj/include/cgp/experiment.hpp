/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "cgp/data.hpp"
#include "cgp/errors.hpp"
#include "cgp/exact.hpp"
#include "cgp/random.hpp"
#include "cgp/training.hpp"

namespace cgp {

// --- toy data ----------------------------------------------------------------

struct ToyData {
  Dataset data;
  Eigen::MatrixXd latents;  // N x 2 ground truth (f1, f2)
};

// Two-latent additive benchmark: f1(x) = sin(x)^3, f2(x) = cos(3x),
// covariates uniform on [-3, 3], Gaussian observation noise.
inline ToyData generate_toy(std::uint64_t seed, int n, double noise_std = 0.5) {
  if (n < 1) throw std::invalid_argument("generate_toy: need n >= 1");
  SequentialRng rng(seed);
  ToyData toy;
  toy.data.x.resize(n, 2);
  toy.data.y.resize(n);
  toy.latents.resize(n, 2);
  for (int i = 0; i < n; ++i) toy.data.x(i, 0) = rng.uniform(-3.0, 3.0);
  for (int i = 0; i < n; ++i) toy.data.x(i, 1) = rng.uniform(-3.0, 3.0);
  for (int i = 0; i < n; ++i) {
    const double f1 = std::pow(std::sin(toy.data.x(i, 0)), 3);
    const double f2 = std::cos(3.0 * toy.data.x(i, 1));
    toy.latents(i, 0) = f1;
    toy.latents(i, 1) = f2;
    toy.data.y[i] = f1 + f2 + noise_std * rng.normal();
  }
  return toy;
}

// --- metrics -----------------------------------------------------------------

struct MetricsRow {
  std::string model;
  double rmse = 0.0;
  double sqrt_mean_var_sum = 0.0;
  double mean_corr = 0.0;
  double sqrt_mean_var_diff = 0.0;
  double neg_bound = 0.0;
};

struct PointSummary {
  Eigen::VectorXd mean1, std1, mean2, std2, corr;
};

inline PointSummary summarize_points(const std::vector<Marginal>& marginals) {
  const int n = static_cast<int>(marginals.size());
  PointSummary p;
  p.mean1.resize(n), p.std1.resize(n), p.mean2.resize(n), p.std2.resize(n), p.corr.resize(n);
  for (int i = 0; i < n; ++i) {
    const Marginal& m = marginals[i];
    if (m.cov(0, 0) < 1e-12 || m.cov(1, 1) < 1e-12)
      throw DegenerateVariance("summarize_points: marginal variance below tolerance");
    p.mean1[i] = m.mean[0];
    p.mean2[i] = m.mean[1];
    p.std1[i] = std::sqrt(m.cov(0, 0));
    p.std2[i] = std::sqrt(m.cov(1, 1));
    p.corr[i] = m.cov(0, 1) / (p.std1[i] * p.std2[i]);
  }
  return p;
}

// Table metrics over a set of evaluation points:
//   rmse against y, sqrt E[var(f1+f2)], E[corr(f1,f2)], sqrt E[var(f1-f2)].
inline MetricsRow compute_metrics(const std::string& model, const std::vector<Marginal>& marginals,
                                  const Eigen::VectorXd& y, double neg_bound) {
  if (static_cast<int>(marginals.size()) != y.size())
    throw std::invalid_argument("compute_metrics: marginal/target count mismatch");
  const int n = static_cast<int>(marginals.size());
  double sq_err = 0.0, var_sum = 0.0, var_diff = 0.0, corr = 0.0;
  for (int i = 0; i < n; ++i) {
    const Marginal& m = marginals[i];
    if (m.mean.size() != 2) throw std::invalid_argument("compute_metrics: needs two latents");
    if (m.cov(0, 0) < 1e-12 || m.cov(1, 1) < 1e-12)
      throw DegenerateVariance("compute_metrics: marginal variance below tolerance");
    const double resid = y[i] - (m.mean[0] + m.mean[1]);
    sq_err += resid * resid;
    var_sum += m.cov(0, 0) + m.cov(1, 1) + 2.0 * m.cov(0, 1);
    var_diff += m.cov(0, 0) + m.cov(1, 1) - 2.0 * m.cov(0, 1);
    corr += m.cov(0, 1) / std::sqrt(m.cov(0, 0) * m.cov(1, 1));
  }
  MetricsRow row;
  row.model = model;
  row.rmse = std::sqrt(sq_err / n);
  row.sqrt_mean_var_sum = std::sqrt(var_sum / n);
  row.mean_corr = corr / n;
  row.sqrt_mean_var_diff = std::sqrt(var_diff / n);
  row.neg_bound = neg_bound;
  return row;
}

// --- evaluation helpers --------------------------------------------------------

inline std::vector<Marginal> variational_marginals(const ModelState& state,
                                                   const Eigen::MatrixXd& x) {
  const InducingPrior prior = build_prior(state.inducing, state.kernels);
  const Projection proj = project(state.inducing, state.kernels, prior, x);
  std::vector<Marginal> out;
  out.reserve(x.rows());
  for (int i = 0; i < static_cast<int>(x.rows()); ++i)
    out.push_back(predictive_marginal(state.q, proj, i));
  return out;
}

inline std::vector<Marginal> exact_marginals(const AdditiveExactModel& model,
                                             const Eigen::MatrixXd& x) {
  const ExactPosterior post = exact_posterior(model, x);
  std::vector<Marginal> out;
  out.reserve(x.rows());
  for (int i = 0; i < static_cast<int>(x.rows()); ++i) out.push_back(post.point_marginal(i));
  return out;
}

// Evidence maximization from a neutral data-driven start: variance split
// evenly across latents, unit lengthscale, noise at half the target variance.
inline HyperFit fit_hyperparameters_default(const Dataset& data, std::uint64_t seed) {
  const int n_latents = data.n_latents();
  const double var_y =
      (data.y.array() - data.y.mean()).square().sum() / std::max(data.size() - 1, 1);
  const double share = std::max(var_y / std::max(n_latents, 1), 1e-3);
  std::vector<SqExpKernel> init;
  for (int c = 0; c < n_latents; ++c) init.push_back(SqExpKernel::from_params(share, 1.0));
  return fit_hyperparameters(data, init, std::sqrt(share), seed);
}

// --- experiment configuration ---------------------------------------------------

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int n = 500;
  std::vector<int> m_values = {10, 30};
  int iterations = 5000;
  double learning_rate = 1e-2;
  double lr_decay = 1.0;
  int batch_size = 0;
  int n_mc = 1;
  int polish_iterations = 4000;
  bool holdout = false;
  std::string out_dir = ".";
  std::string format = "both";  // csv | json | both

  void validate() const {
    if (n < 1) throw std::invalid_argument("config: n must be >= 1");
    if (m_values.empty()) throw std::invalid_argument("config: need at least one m value");
    for (int m : m_values)
      if (m < 1) throw std::invalid_argument("config: m values must be >= 1");
    if (iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
    if (polish_iterations < 0) throw std::invalid_argument("config: polish_iterations must be >= 0");
    if (format != "csv" && format != "json" && format != "both")
      throw std::invalid_argument("config: format must be csv, json or both");
  }
};

// key = value lines; '#' starts a comment; m accepts a comma-separated list.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  const auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) continue;
    if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "n") cfg.n = std::stoi(value);
    else if (key == "m") {
      cfg.m_values.clear();
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.m_values.push_back(std::stoi(trim(tok)));
    }
    else if (key == "iterations") cfg.iterations = std::stoi(value);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
    else if (key == "lr_decay") cfg.lr_decay = std::stod(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "n_mc") cfg.n_mc = std::stoi(value);
    else if (key == "polish_iterations") cfg.polish_iterations = std::stoi(value);
    else if (key == "holdout") cfg.holdout = (value == "true" || value == "1");
    else if (key == "out") cfg.out_dir = value;
    else if (key == "format") cfg.format = value;
    else throw std::runtime_error("load_config: unknown key '" + key + "'");
  }
  return cfg;
}

// --- report -------------------------------------------------------------------

struct GridSummary {
  Eigen::VectorXd x, mean1, std1, mean2, std2;
};

struct ModelResult {
  MetricsRow row;
  PointSummary points;
  GridSummary grid;
  std::vector<Eigen::VectorXd> inducing;  // empty for the exact model
  std::vector<TraceEntry> trace;          // empty for the exact model
  double seconds = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<double> hyper_variance, hyper_lengthscale;
  double noise_std = 0.0;
  double exact_log_evidence = 0.0;
  std::vector<ModelResult> models;  // exact first, then coupled[m], then mf[m]
  bool failed = false;
  std::string error;
  double total_seconds = 0.0;
};

namespace detail {

inline GridSummary grid_from_marginals(const Eigen::VectorXd& gx,
                                       const std::vector<Marginal>& marginals) {
  GridSummary g;
  g.x = gx;
  const int n = static_cast<int>(marginals.size());
  g.mean1.resize(n), g.std1.resize(n), g.mean2.resize(n), g.std2.resize(n);
  for (int i = 0; i < n; ++i) {
    g.mean1[i] = marginals[i].mean[0];
    g.mean2[i] = marginals[i].mean[1];
    g.std1[i] = std::sqrt(std::max(marginals[i].cov(0, 0), 0.0));
    g.std2[i] = std::sqrt(std::max(marginals[i].cov(1, 1), 0.0));
  }
  return g;
}

}  // namespace detail

// Full pipeline: generate, fit hyperparameters on the exact evidence, freeze
// them, train the variational models, evaluate everything at the training
// covariates (plus a fresh draw when holdout is on). Failures mid-way leave
// the already-computed rows in place and set the failure marker.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto seconds_since = [](clock::time_point a) {
    return std::chrono::duration<double>(clock::now() - a).count();
  };

  ExperimentReport rep;
  rep.config = cfg;
  try {
    cfg.validate();
    const ToyData toy = generate_toy(cfg.seed, cfg.n);
    const ToyData hold = cfg.holdout ? generate_toy(mix64(cfg.seed ^ 0x401D0ULL), cfg.n) : ToyData{};

    // fit hyperparameters on the closed-form evidence, then freeze them
    const HyperFit fit = fit_hyperparameters_default(toy.data, cfg.seed);
    for (const auto& k : fit.kernels) {
      rep.hyper_variance.push_back(k.variance());
      rep.hyper_lengthscale.push_back(k.lengthscale());
    }
    rep.noise_std = fit.noise_std;
    rep.exact_log_evidence = fit.log_evidence;

    Eigen::VectorXd gx = Eigen::VectorXd::LinSpaced(201, -3.0, 3.0);
    Eigen::MatrixXd grid_x(gx.size(), 2);
    grid_x.col(0) = gx;
    grid_x.col(1) = gx;

    // exact model row
    const auto t_exact = clock::now();
    const AdditiveExactModel exact = build_exact_model(fit.kernels, fit.noise_std, toy.data);
    ModelResult exact_result;
    const std::vector<Marginal> exact_marg = exact_marginals(exact, toy.data.x);
    exact_result.row =
        compute_metrics("exact", exact_marg, toy.data.y, -exact_log_evidence(exact));
    exact_result.points = summarize_points(exact_marg);
    exact_result.grid = detail::grid_from_marginals(gx, exact_marginals(exact, grid_x));
    exact_result.seconds = seconds_since(t_exact);
    rep.models.push_back(std::move(exact_result));

    const LikelihoodSpec spec = GaussianLikelihood{fit.noise_std, Eigen::VectorXd::Ones(2)};

    for (PosteriorStructure structure : {PosteriorStructure::Coupled, PosteriorStructure::MeanField}) {
      for (int m : cfg.m_values) {
        const auto t_model = clock::now();
        const std::string label =
            (structure == PosteriorStructure::Coupled ? "coupled[" : "mf[") + std::to_string(m) + "]";
        TrainConfig tc;
        tc.iterations = cfg.iterations;
        tc.learning_rate = cfg.learning_rate;
        tc.lr_decay = cfg.lr_decay;
        tc.batch_size = cfg.batch_size;
        tc.n_mc = cfg.n_mc;
        tc.polish_iterations = cfg.polish_iterations;
        tc.seed = cfg.seed;
        const ModelState init =
            initial_state(fit.kernels, grid_inducing(toy.data.x, m), structure);
        TrainResult trained = optimize(init, toy.data, spec, tc);

        ModelResult result;
        const std::vector<Marginal> marg = variational_marginals(trained.state, toy.data.x);
        result.row = compute_metrics(label, marg, toy.data.y, -elbo(trained.state, toy.data, spec));
        result.points = summarize_points(marg);
        result.grid =
            detail::grid_from_marginals(gx, variational_marginals(trained.state, grid_x));
        result.inducing = trained.state.inducing.locations;
        result.trace = std::move(trained.trace);
        result.seconds = seconds_since(t_model);
        rep.models.push_back(std::move(result));

        if (cfg.holdout) {
          ModelResult held;
          const std::vector<Marginal> hm = variational_marginals(trained.state, hold.data.x);
          held.row = compute_metrics(label + "-holdout", hm, hold.data.y, result.row.neg_bound);
          held.points = summarize_points(hm);
          rep.models.push_back(std::move(held));
        }
      }
    }
    if (cfg.holdout) {
      ModelResult held;
      const std::vector<Marginal> hm = exact_marginals(exact, hold.data.x);
      held.row = compute_metrics("exact-holdout", hm, hold.data.y, rep.models[0].row.neg_bound);
      held.points = summarize_points(hm);
      rep.models.push_back(std::move(held));
    }

    // table order: exact, coupled[m]..., mf[m]..., then holdout rows
    std::stable_sort(rep.models.begin(), rep.models.end(),
                     [](const ModelResult& a, const ModelResult& b) {
                       const auto rank = [](const std::string& s) {
                         const bool holdout = s.find("-holdout") != std::string::npos;
                         int r = holdout ? 100 : 0;
                         if (s.rfind("exact", 0) == 0) return r + 0;
                         if (s.rfind("coupled", 0) == 0) return r + 1;
                         return r + 2;
                       };
                       return rank(a.row.model) < rank(b.row.model);
                     });
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.error = e.what();
  }
  rep.total_seconds = seconds_since(t0);
  return rep;
}

// --- serialization ---------------------------------------------------------------

namespace detail {

inline std::string fmt_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline nlohmann::json row_to_json(const MetricsRow& r) {
  return {{"model", r.model},
          {"rmse", r.rmse},
          {"sqrt_mean_var_sum", r.sqrt_mean_var_sum},
          {"mean_corr", r.mean_corr},
          {"sqrt_mean_var_diff", r.sqrt_mean_var_diff},
          {"neg_bound", r.neg_bound}};
}

inline MetricsRow row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.model = j.at("model").get<std::string>();
  r.rmse = j.at("rmse").get<double>();
  r.sqrt_mean_var_sum = j.at("sqrt_mean_var_sum").get<double>();
  r.mean_corr = j.at("mean_corr").get<double>();
  r.sqrt_mean_var_diff = j.at("sqrt_mean_var_diff").get<double>();
  r.neg_bound = j.at("neg_bound").get<double>();
  return r;
}

}  // namespace detail

inline nlohmann::json model_result_to_json(const ModelResult& m) {
  nlohmann::json j;
  j["row"] = detail::row_to_json(m.row);
  j["points"] = {{"mean1", detail::vec_to_json(m.points.mean1)},
                 {"std1", detail::vec_to_json(m.points.std1)},
                 {"mean2", detail::vec_to_json(m.points.mean2)},
                 {"std2", detail::vec_to_json(m.points.std2)},
                 {"corr", detail::vec_to_json(m.points.corr)}};
  j["grid"] = {{"x", detail::vec_to_json(m.grid.x)},
               {"mean1", detail::vec_to_json(m.grid.mean1)},
               {"std1", detail::vec_to_json(m.grid.std1)},
               {"mean2", detail::vec_to_json(m.grid.mean2)},
               {"std2", detail::vec_to_json(m.grid.std2)}};
  nlohmann::json inducing = nlohmann::json::array();
  for (const auto& z : m.inducing) inducing.push_back(detail::vec_to_json(z));
  j["inducing"] = inducing;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : m.trace) trace.push_back({t.iteration, t.elbo, t.best});
  j["trace"] = trace;
  return j;
}

inline ModelResult model_result_from_json(const nlohmann::json& j) {
  ModelResult m;
  m.row = detail::row_from_json(j.at("row"));
  const auto& p = j.at("points");
  m.points.mean1 = detail::vec_from_json(p.at("mean1"));
  m.points.std1 = detail::vec_from_json(p.at("std1"));
  m.points.mean2 = detail::vec_from_json(p.at("mean2"));
  m.points.std2 = detail::vec_from_json(p.at("std2"));
  m.points.corr = detail::vec_from_json(p.at("corr"));
  const auto& g = j.at("grid");
  m.grid.x = detail::vec_from_json(g.at("x"));
  m.grid.mean1 = detail::vec_from_json(g.at("mean1"));
  m.grid.std1 = detail::vec_from_json(g.at("std1"));
  m.grid.mean2 = detail::vec_from_json(g.at("mean2"));
  m.grid.std2 = detail::vec_from_json(g.at("std2"));
  for (const auto& z : j.at("inducing")) m.inducing.push_back(detail::vec_from_json(z));
  for (const auto& t : j.at("trace"))
    m.trace.push_back({t.at(0).get<int>(), t.at(1).get<double>(), t.at(2).get<double>()});
  return m;
}

inline nlohmann::json report_to_json(const ExperimentReport& rep) {
  nlohmann::json j;
  j["config"] = {{"seed", rep.config.seed},
                 {"n", rep.config.n},
                 {"m", rep.config.m_values},
                 {"iterations", rep.config.iterations},
                 {"learning_rate", rep.config.learning_rate},
                 {"lr_decay", rep.config.lr_decay},
                 {"batch_size", rep.config.batch_size},
                 {"n_mc", rep.config.n_mc},
                 {"polish_iterations", rep.config.polish_iterations},
                 {"holdout", rep.config.holdout},
                 {"out", rep.config.out_dir},
                 {"format", rep.config.format}};
  j["hypers"] = {{"variance", rep.hyper_variance},
                 {"lengthscale", rep.hyper_lengthscale},
                 {"noise_std", rep.noise_std},
                 {"log_evidence", rep.exact_log_evidence}};
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json models = nlohmann::json::object();
  nlohmann::json timing_models = nlohmann::json::object();
  for (const auto& m : rep.models) {
    rows.push_back(detail::row_to_json(m.row));
    models[m.row.model] = model_result_to_json(m);
    timing_models[m.row.model] = m.seconds;
  }
  j["rows"] = rows;
  j["models"] = models;
  j["failed"] = rep.failed;
  j["error"] = rep.error;
  j["timing"] = {{"total_seconds", rep.total_seconds}, {"models", timing_models}};
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport rep;
  const auto& c = j.at("config");
  rep.config.seed = c.at("seed").get<std::uint64_t>();
  rep.config.n = c.at("n").get<int>();
  rep.config.m_values = c.at("m").get<std::vector<int>>();
  rep.config.iterations = c.at("iterations").get<int>();
  rep.config.learning_rate = c.at("learning_rate").get<double>();
  rep.config.lr_decay = c.at("lr_decay").get<double>();
  rep.config.batch_size = c.at("batch_size").get<int>();
  rep.config.n_mc = c.at("n_mc").get<int>();
  rep.config.polish_iterations = c.at("polish_iterations").get<int>();
  rep.config.holdout = c.at("holdout").get<bool>();
  rep.config.out_dir = c.at("out").get<std::string>();
  rep.config.format = c.at("format").get<std::string>();
  const auto& h = j.at("hypers");
  rep.hyper_variance = h.at("variance").get<std::vector<double>>();
  rep.hyper_lengthscale = h.at("lengthscale").get<std::vector<double>>();
  rep.noise_std = h.at("noise_std").get<double>();
  rep.exact_log_evidence = h.at("log_evidence").get<double>();
  for (const auto& row : j.at("rows")) {
    const std::string label = row.at("model").get<std::string>();
    ModelResult m = model_result_from_json(j.at("models").at(label));
    m.seconds = j.at("timing").at("models").at(label).get<double>();
    rep.models.push_back(std::move(m));
  }
  rep.failed = j.at("failed").get<bool>();
  rep.error = j.at("error").get<std::string>();
  rep.total_seconds = j.at("timing").at("total_seconds").get<double>();
  return rep;
}

// CSV with fixed column order; floats carry 6 significant digits.
inline std::string report_to_csv(const ExperimentReport& rep) {
  std::string out = "model,rmse,sqrt_mean_var_sum,mean_corr,sqrt_mean_var_diff,neg_bound\n";
  for (const auto& m : rep.models) {
    out += m.row.model + ',' + detail::fmt_g6(m.row.rmse) + ',' +
           detail::fmt_g6(m.row.sqrt_mean_var_sum) + ',' + detail::fmt_g6(m.row.mean_corr) + ',' +
           detail::fmt_g6(m.row.sqrt_mean_var_diff) + ',' + detail::fmt_g6(m.row.neg_bound) + '\n';
  }
  if (rep.failed) out += "# FAILED: " + rep.error + "\n";
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes report.csv / report.json into out_dir according to cfg.format.
inline void emit_report(const ExperimentReport& rep, const std::string& out_dir,
                        const std::string& format) {
  if (format == "csv" || format == "both")
    write_text_file(out_dir + "/report.csv", report_to_csv(rep));
  if (format == "json" || format == "both")
    write_text_file(out_dir + "/report.json", report_to_json(rep).dump(2) + "\n");
}

inline ExperimentReport read_report_json(const std::string& path) {
  return report_from_json(nlohmann::json::parse(read_text_file(path)));
}

// --- dataset files ------------------------------------------------------------

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::string out;
  for (int c = 0; c < data.n_latents(); ++c) out += "x" + std::to_string(c + 1) + ",";
  out += "y\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int c = 0; c < data.n_latents(); ++c) out += detail::fmt_g17(data.x(i, c)) + ",";
    out += detail::fmt_g17(data.y[i]) + "\n";
  }
  write_text_file(path, out);
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty dataset file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  int cols = 1;
  for (char ch : header) cols += ch == ',';
  const int n_latents = cols - 1;
  if (n_latents < 1) throw std::runtime_error("dataset header needs x columns and y: " + path);
  std::string expected;
  for (int c = 0; c < n_latents; ++c) expected += "x" + std::to_string(c + 1) + ",";
  expected += "y";
  if (header != expected)
    throw std::runtime_error("dataset header must be '" + expected + "': " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (static_cast<int>(row.size()) != cols)
      throw std::runtime_error("dataset row has wrong arity: " + path);
    rows.push_back(std::move(row));
  }
  Dataset data;
  data.x.resize(rows.size(), n_latents);
  data.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < n_latents; ++c) data.x(i, c) = rows[i][c];
    data.y[static_cast<Eigen::Index>(i)] = rows[i][n_latents];
  }
  data.validate();
  return data;
}

inline void write_truth_csv(const std::string& path, const ToyData& toy) {
  std::string out = "f1,f2\n";
  for (int i = 0; i < toy.latents.rows(); ++i)
    out += detail::fmt_g17(toy.latents(i, 0)) + "," + detail::fmt_g17(toy.latents(i, 1)) + "\n";
  write_text_file(path, out);
}

// --- model state files ----------------------------------------------------------

inline nlohmann::json state_to_json(const ModelState& s) {
  nlohmann::json j;
  j["structure"] = s.structure == PosteriorStructure::Coupled ? "coupled" : "mf";
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& k : s.kernels)
    kernels.push_back({{"variance", k.variance()}, {"lengthscale", k.lengthscale()}});
  j["kernels"] = kernels;
  nlohmann::json inducing = nlohmann::json::array();
  for (const auto& z : s.inducing.locations) inducing.push_back(detail::vec_to_json(z));
  j["inducing"] = inducing;
  nlohmann::json scale = nlohmann::json::array();
  for (int i = 0; i < s.q.dim(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int jj = 0; jj <= i; ++jj) row.push_back(s.q.scale(i, jj));
    scale.push_back(row);
  }
  j["q"] = {{"mean", detail::vec_to_json(s.q.mean)}, {"scale_lower", scale}};
  return j;
}

inline ModelState state_from_json(const nlohmann::json& j) {
  ModelState s;
  s.structure = j.at("structure").get<std::string>() == "mf" ? PosteriorStructure::MeanField
                                                             : PosteriorStructure::Coupled;
  for (const auto& k : j.at("kernels"))
    s.kernels.push_back(SqExpKernel::from_params(k.at("variance").get<double>(),
                                                 k.at("lengthscale").get<double>()));
  for (const auto& z : j.at("inducing")) s.inducing.locations.push_back(detail::vec_from_json(z));
  const auto& q = j.at("q");
  s.q.mean = detail::vec_from_json(q.at("mean"));
  const int dim = static_cast<int>(s.q.mean.size());
  s.q.scale = Eigen::MatrixXd::Zero(dim, dim);
  const auto& scale = q.at("scale_lower");
  for (int i = 0; i < dim; ++i)
    for (int jj = 0; jj <= i; ++jj) s.q.scale(i, jj) = scale.at(i).at(jj).get<double>();
  for (const auto& z : s.inducing.locations) s.q.block_dim.push_back(static_cast<int>(z.size()));
  s.q.validate();
  return s;
}

inline nlohmann::json hyperfit_to_json(const HyperFit& fit) {
  nlohmann::json j;
  nlohmann::json variance = nlohmann::json::array(), lengthscale = nlohmann::json::array();
  for (const auto& k : fit.kernels) {
    variance.push_back(k.variance());
    lengthscale.push_back(k.lengthscale());
  }
  j["variance"] = variance;
  j["lengthscale"] = lengthscale;
  j["noise_std"] = fit.noise_std;
  j["log_evidence"] = fit.log_evidence;
  return j;
}

inline HyperFit hyperfit_from_json(const nlohmann::json& j) {
  HyperFit fit;
  const auto variance = j.at("variance").get<std::vector<double>>();
  const auto lengthscale = j.at("lengthscale").get<std::vector<double>>();
  if (variance.size() != lengthscale.size())
    throw std::runtime_error("hyperfit: variance/lengthscale arity mismatch");
  for (std::size_t c = 0; c < variance.size(); ++c)
    fit.kernels.push_back(SqExpKernel::from_params(variance[c], lengthscale[c]));
  fit.noise_std = j.at("noise_std").get<double>();
  fit.log_evidence = j.at("log_evidence").get<double>();
  return fit;
}

}  // namespace cgp
