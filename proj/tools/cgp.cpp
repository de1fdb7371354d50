/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */

// Command-line pipeline around the library: synthesize the additive toy
// dataset, fit hyperparameters on the exact evidence, train the variational
// models, evaluate them, and assemble the report files.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgp/cgp.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonTrainOpts {
  std::string data_path;
  std::string hypers_path;
  std::string model = "coupled";
  int m = 10;
  int iters = 5000;
  double lr = 1e-2;
  double lr_decay = 1.0;
  int batch_size = 0;
  int n_mc = 1;
  int polish = 4000;
  std::uint64_t seed = 0;
  bool fix_inducing = false;
  bool optimize_hypers = false;
  std::string out;
};

std::string model_label(const std::string& model, int m) {
  return model + "[" + std::to_string(m) + "]";
}

int label_rank(const std::string& label) {
  const bool holdout = label.find("-holdout") != std::string::npos;
  int rank = holdout ? 100 : 0;
  if (label.rfind("exact", 0) == 0) return rank;
  if (label.rfind("coupled", 0) == 0) return rank + 1;
  return rank + 2;
}

int label_m(const std::string& label) {
  const auto open = label.find('[');
  const auto close = label.find(']');
  if (open == std::string::npos || close == std::string::npos || close <= open + 1) return 0;
  return std::stoi(label.substr(open + 1, close - open - 1));
}

cgp::ModelResult evaluate_model(const std::string& label, const std::vector<cgp::Marginal>& marg,
                                const Eigen::VectorXd& y, double neg_bound) {
  cgp::ModelResult result;
  result.row = cgp::compute_metrics(label, marg, y, neg_bound);
  result.points = cgp::summarize_points(marg);
  return result;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupled Gaussian process regression: exact oracle, mean-field and "
               "coupled variational models"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "synthesize the additive toy dataset");
  std::uint64_t gen_seed = 0;
  int gen_n = 500;
  double gen_noise = 0.5;
  std::string gen_out = ".";
  generate->add_option("--seed", gen_seed, "random seed");
  generate->add_option("--n", gen_n, "number of observations")->check(CLI::PositiveNumber);
  generate->add_option("--noise-std", gen_noise, "observation noise standard deviation");
  generate->add_option("--out", gen_out, "output directory");

  // fit-hypers
  auto* fit_cmd = app.add_subcommand("fit-hypers", "maximize the exact evidence over "
                                                   "kernel hyperparameters and noise");
  std::string fit_data, fit_out = "hypers.json";
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("--data", fit_data, "dataset CSV")->required();
  fit_cmd->add_option("--seed", fit_seed, "seed for search restarts");
  fit_cmd->add_option("--out", fit_out, "output hyperparameter JSON");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a variational model");
  CommonTrainOpts topt;
  train_cmd->add_option("--data", topt.data_path, "dataset CSV")->required();
  train_cmd->add_option("--hypers", topt.hypers_path, "hyperparameter JSON")->required();
  train_cmd->add_option("--model", topt.model, "mf | coupled")
      ->check(CLI::IsMember({"mf", "coupled"}));
  train_cmd->add_option("--m", topt.m, "inducing points per latent")->check(CLI::PositiveNumber);
  train_cmd->add_option("--iters", topt.iters, "optimization iterations");
  train_cmd->add_option("--lr", topt.lr, "learning rate");
  train_cmd->add_option("--lr-decay", topt.lr_decay, "per-iteration learning-rate multiplier");
  train_cmd->add_option("--batch-size", topt.batch_size, "minibatch size (0 = full batch)");
  train_cmd->add_option("--n-mc", topt.n_mc, "Monte Carlo samples per point");
  train_cmd->add_option("--polish", topt.polish, "quasi-Newton refinement iterations");
  train_cmd->add_option("--seed", topt.seed, "seed");
  train_cmd->add_flag("--fix-inducing", topt.fix_inducing, "keep inducing locations fixed");
  train_cmd->add_flag("--optimize-hypers", topt.optimize_hypers,
                      "also optimize kernel hyperparameters");
  train_cmd->add_option("--out", topt.out, "output model JSON")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "compute table metrics for a model");
  std::string ev_data, ev_hypers, ev_model = "exact", ev_state, ev_out = "eval.json";
  bool ev_holdout = false;
  std::uint64_t ev_seed = 0;
  eval_cmd->add_option("--data", ev_data, "dataset CSV")->required();
  eval_cmd->add_option("--hypers", ev_hypers, "hyperparameter JSON")->required();
  eval_cmd->add_option("--model", ev_model, "exact | mf | coupled")
      ->check(CLI::IsMember({"exact", "mf", "coupled"}));
  eval_cmd->add_option("--state", ev_state, "trained model JSON (mf/coupled)");
  eval_cmd->add_flag("--holdout", ev_holdout, "evaluate on a fresh draw instead of the data");
  eval_cmd->add_option("--seed", ev_seed, "seed for the holdout draw");
  eval_cmd->add_option("--out", ev_out, "output evaluation JSON");

  // report
  auto* report_cmd = app.add_subcommand("report", "assemble eval-*.json files into a report");
  std::string rep_dir = ".", rep_out = ".", rep_format = "both";
  report_cmd->add_option("--dir", rep_dir, "directory with eval-*.json files");
  report_cmd->add_option("--out", rep_out, "output directory");
  report_cmd->add_option("--format", rep_format, "csv | json | both")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  // run-all
  auto* run_cmd = app.add_subcommand("run-all", "full pipeline: generate, fit, train, report");
  std::string run_config;
  cgp::ExperimentConfig run_cfg;
  run_cmd->add_option("--config", run_config, "key=value config file");
  auto* o_seed = run_cmd->add_option("--seed", run_cfg.seed, "random seed");
  auto* o_n = run_cmd->add_option("--n", run_cfg.n, "number of observations");
  auto* o_m = run_cmd->add_option("--m", run_cfg.m_values, "inducing counts (repeatable)");
  auto* o_iters = run_cmd->add_option("--iters", run_cfg.iterations, "iterations");
  auto* o_lr = run_cmd->add_option("--lr", run_cfg.learning_rate, "learning rate");
  auto* o_decay = run_cmd->add_option("--lr-decay", run_cfg.lr_decay, "learning-rate decay");
  auto* o_batch = run_cmd->add_option("--batch-size", run_cfg.batch_size, "minibatch size");
  auto* o_nmc = run_cmd->add_option("--n-mc", run_cfg.n_mc, "Monte Carlo samples");
  auto* o_polish =
      run_cmd->add_option("--polish", run_cfg.polish_iterations, "refinement iterations");
  auto* o_holdout = run_cmd->add_flag("--holdout", run_cfg.holdout, "add holdout evaluation");
  auto* o_out = run_cmd->add_option("--out", run_cfg.out_dir, "output directory");
  auto* o_format = run_cmd->add_option("--format", run_cfg.format, "csv | json | both")
                       ->check(CLI::IsMember({"csv", "json", "both"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      fs::create_directories(gen_out);
      const cgp::ToyData toy = cgp::generate_toy(gen_seed, gen_n, gen_noise);
      cgp::write_dataset_csv(gen_out + "/dataset.csv", toy.data);
      cgp::write_truth_csv(gen_out + "/truth.csv", toy);
      std::cout << "wrote " << gen_out << "/dataset.csv (" << gen_n << " rows)\n";
    } else if (*fit_cmd) {
      const cgp::Dataset data = cgp::read_dataset_csv(fit_data);
      const cgp::HyperFit fit = cgp::fit_hyperparameters_default(data, fit_seed);
      cgp::write_text_file(fit_out, cgp::hyperfit_to_json(fit).dump(2) + "\n");
      std::cout << "log evidence " << fit.log_evidence << ", noise " << fit.noise_std << "\n";
    } else if (*train_cmd) {
      const cgp::Dataset data = cgp::read_dataset_csv(topt.data_path);
      const cgp::HyperFit fit =
          cgp::hyperfit_from_json(nlohmann::json::parse(cgp::read_text_file(topt.hypers_path)));
      const cgp::PosteriorStructure structure = topt.model == "mf"
                                                    ? cgp::PosteriorStructure::MeanField
                                                    : cgp::PosteriorStructure::Coupled;
      cgp::TrainConfig tc;
      tc.iterations = topt.iters;
      tc.learning_rate = topt.lr;
      tc.lr_decay = topt.lr_decay;
      tc.batch_size = topt.batch_size;
      tc.n_mc = topt.n_mc;
      tc.polish_iterations = topt.polish;
      tc.seed = topt.seed;
      tc.optimize_inducing = !topt.fix_inducing;
      tc.optimize_hypers = topt.optimize_hypers;
      const cgp::LikelihoodSpec spec =
          cgp::GaussianLikelihood{fit.noise_std, Eigen::VectorXd::Ones(data.n_latents())};
      const cgp::ModelState init =
          cgp::initial_state(fit.kernels, cgp::grid_inducing(data.x, topt.m), structure);
      const cgp::TrainResult result = cgp::optimize(init, data, spec, tc);
      nlohmann::json out = cgp::state_to_json(result.state);
      out["label"] = model_label(topt.model, topt.m);
      nlohmann::json trace = nlohmann::json::array();
      for (const auto& t : result.trace) trace.push_back({t.iteration, t.elbo, t.best});
      out["trace"] = trace;
      cgp::write_text_file(topt.out, out.dump(2) + "\n");
      std::cout << "final bound " << result.trace.back().best << " -> " << topt.out << "\n";
    } else if (*eval_cmd) {
      const cgp::Dataset data = cgp::read_dataset_csv(ev_data);
      const cgp::HyperFit fit =
          cgp::hyperfit_from_json(nlohmann::json::parse(cgp::read_text_file(ev_hypers)));
      const cgp::ToyData holdout =
          ev_holdout ? cgp::generate_toy(cgp::mix64(ev_seed ^ 0x401D0ULL), data.size())
                     : cgp::ToyData{};
      const Eigen::MatrixXd& eval_x = ev_holdout ? holdout.data.x : data.x;
      const Eigen::VectorXd& eval_y = ev_holdout ? holdout.data.y : data.y;

      cgp::ModelResult result;
      std::string label;
      if (ev_model == "exact") {
        const cgp::AdditiveExactModel exact =
            cgp::build_exact_model(fit.kernels, fit.noise_std, data);
        label = ev_holdout ? "exact-holdout" : "exact";
        result = evaluate_model(label, cgp::exact_marginals(exact, eval_x), eval_y,
                                -cgp::exact_log_evidence(exact));
      } else {
        if (ev_state.empty())
          throw std::runtime_error("evaluate: --state is required for mf/coupled models");
        const nlohmann::json sj = nlohmann::json::parse(cgp::read_text_file(ev_state));
        const cgp::ModelState state = cgp::state_from_json(sj);
        label = sj.contains("label") ? sj.at("label").get<std::string>()
                                     : model_label(ev_model, state.inducing.count(0));
        if (ev_holdout) label += "-holdout";
        const cgp::LikelihoodSpec spec =
            cgp::GaussianLikelihood{fit.noise_std, Eigen::VectorXd::Ones(data.n_latents())};
        result = evaluate_model(label, cgp::variational_marginals(state, eval_x), eval_y,
                                -cgp::elbo(state, data, spec));
        result.inducing = state.inducing.locations;
      }
      nlohmann::json out = cgp::model_result_to_json(result);
      out["label"] = label;
      cgp::write_text_file(ev_out, out.dump(2) + "\n");
      std::cout << "wrote " << ev_out << "\n";
    } else if (*report_cmd) {
      std::vector<std::string> files;
      for (const auto& entry : fs::directory_iterator(rep_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("eval-", 0) == 0 && name.size() > 5 &&
            name.substr(name.size() - 5) == ".json")
          files.push_back(entry.path().string());
      }
      if (files.empty()) throw std::runtime_error("report: no eval-*.json files in " + rep_dir);
      cgp::ExperimentReport rep;
      for (const auto& f : files) {
        const nlohmann::json j = nlohmann::json::parse(cgp::read_text_file(f));
        cgp::ModelResult m = cgp::model_result_from_json(j);
        rep.models.push_back(std::move(m));
      }
      std::sort(rep.models.begin(), rep.models.end(),
                [](const cgp::ModelResult& a, const cgp::ModelResult& b) {
                  const int ra = label_rank(a.row.model), rb = label_rank(b.row.model);
                  if (ra != rb) return ra < rb;
                  if (label_m(a.row.model) != label_m(b.row.model))
                    return label_m(a.row.model) < label_m(b.row.model);
                  return a.row.model < b.row.model;
                });
      for (const auto& m : rep.models)
        if (m.row.model == "exact") rep.exact_log_evidence = -m.row.neg_bound;
      fs::create_directories(rep_out);
      cgp::emit_report(rep, rep_out, rep_format);
      std::cout << "wrote report for " << rep.models.size() << " models to " << rep_out << "\n";
    } else if (*run_cmd) {
      cgp::ExperimentConfig cfg;
      if (!run_config.empty()) cfg = cgp::load_config(run_config);
      if (o_seed->count()) cfg.seed = run_cfg.seed;
      if (o_n->count()) cfg.n = run_cfg.n;
      if (o_m->count()) cfg.m_values = run_cfg.m_values;
      if (o_iters->count()) cfg.iterations = run_cfg.iterations;
      if (o_lr->count()) cfg.learning_rate = run_cfg.learning_rate;
      if (o_decay->count()) cfg.lr_decay = run_cfg.lr_decay;
      if (o_batch->count()) cfg.batch_size = run_cfg.batch_size;
      if (o_nmc->count()) cfg.n_mc = run_cfg.n_mc;
      if (o_polish->count()) cfg.polish_iterations = run_cfg.polish_iterations;
      if (o_holdout->count()) cfg.holdout = run_cfg.holdout;
      if (o_out->count()) cfg.out_dir = run_cfg.out_dir;
      if (o_format->count()) cfg.format = run_cfg.format;
      cfg.validate();
      fs::create_directories(cfg.out_dir);

      const cgp::ToyData toy = cgp::generate_toy(cfg.seed, cfg.n);
      cgp::write_dataset_csv(cfg.out_dir + "/dataset.csv", toy.data);
      cgp::write_truth_csv(cfg.out_dir + "/truth.csv", toy);

      const cgp::ExperimentReport rep = cgp::run_experiment(cfg);
      cgp::emit_report(rep, cfg.out_dir, cfg.format);
      for (const auto& row : rep.models)
        std::cout << row.row.model << ": rmse " << cgp::detail::fmt_g6(row.row.rmse)
                  << ", corr " << cgp::detail::fmt_g6(row.row.mean_corr) << ", -bound "
                  << cgp::detail::fmt_g6(row.row.neg_bound) << "\n";
      if (rep.failed) {
        std::cerr << "experiment failed: " << rep.error << "\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
