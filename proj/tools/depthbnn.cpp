// depthbnn command-line tool.
//
//   depthbnn gen-data  [--config F] [--set K=V]... --output DIR
//   depthbnn train     [--config F] [--set K=V]... --output DIR
//   depthbnn suite     [--config F] [--set K=V]... --output DIR [--threads N]
//   depthbnn eval      --checkpoint F [--set K=V]... [--output DIR]
//   depthbnn gradcheck [--config F] [--set K=V]... [--kind K] [--step H] [--tol T]
//   depthbnn depth-pmf [--config F] [--set K=V]... [--lmax N] [--output DIR]
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthbnn/config.hpp"
#include "depthbnn/errors.hpp"
#include "depthbnn/report.hpp"
#include "depthbnn/spiral.hpp"
#include "depthbnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace depthbnn;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool output_required) {
  cmd->add_option("--config", args.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "Override one config key, KEY=VALUE (repeatable)");
  auto* out = cmd->add_option("--output", args.output, "Output directory");
  if (output_required) out->required();
}

SuiteConfig load_config(const CommonArgs& args) {
  SuiteConfig config;
  if (!args.config_path.empty()) {
    if (!fs::exists(args.config_path)) throw UsageError("config file not found: " + args.config_path);
    config = parse_suite_config(read_text_file(args.config_path));
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    apply_setting(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  config.base.validate();
  return config;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_gen_data(const CommonArgs& args) {
  const TrainConfig c = load_config(args).base;
  const fs::path dir = args.output;
  fs::create_directories(dir);
  const SplitDatasets data = generate_splits(c.omega, c.seed, c.n_train, c.n_val, c.n_test, c.noise_var);
  write_dataset_csv(dir / "train.csv", data.train);
  write_dataset_csv(dir / "val.csv", data.val);
  write_dataset_csv(dir / "test.csv", data.test);
  write_text_file(dir / "config.txt", to_text(c));
  const nlohmann::json j = {{"train", data.train.checksum}, {"val", data.val.checksum}, {"test", data.test.checksum}};
  write_text_file(dir / "checksums.json", j.dump(2) + "\n");
  print_json(j);
  return kOk;
}

int cmd_train(const CommonArgs& args) {
  const TrainConfig c = load_config(args).base;
  const fs::path dir = args.output;
  fs::create_directories(dir);
  write_text_file(dir / "config.txt", to_text(c));
  const SplitDatasets data = generate_splits(c.omega, c.seed, c.n_train, c.n_val, c.n_test, c.noise_var);
  TrainOptions opts;
  opts.checkpoint_path = dir / "checkpoint.bin";
  const RunResult result = train(c, data, opts);
  write_run_artifacts(dir, c, result);
  print_json({{"test_accuracy", result.test_accuracy},
              {"best_val_vfe", result.best_val_vfe},
              {"best_epoch", result.best_epoch},
              {"depth_posterior_mean", result.depth_posterior_mean},
              {"depth_posterior_std", result.depth_posterior_std}});
  return kOk;
}

int cmd_suite(const CommonArgs& args, int threads) {
  const SuiteConfig c = load_config(args);
  if (c.runs < 1) throw UsageError("runs must be at least 1");
  const fs::path dir = args.output;
  fs::create_directories(dir);
  write_text_file(dir / "config.txt", to_text(c));
  SuiteOptions opts;
  opts.threads = threads;
  opts.output_root = dir;
  opts.on_cell = [](const SuiteCell& cell) {
    std::cerr << "omega " << cell.omega << " run " << cell.run << ' ' << to_string(cell.kind) << ": ";
    if (cell.result) {
      std::cerr << "accuracy " << cell.result->test_accuracy << '\n';
    } else {
      std::cerr << "FAILED " << cell.error << '\n';
    }
  };
  const auto cells = run_suite(c, opts);
  write_aggregate_csvs(dir, cells);
  std::size_t ok = 0;
  for (const auto& cell : cells) ok += cell.result ? 1 : 0;
  std::cerr << ok << " of " << cells.size() << " cells succeeded\n";
  return ok > 0 ? kOk : kRuntimeFailure;
}

int cmd_eval(const std::string& checkpoint, const std::vector<std::string>& overrides, const std::string& output,
             int samples) {
  if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainConfig c = checkpoint_config(ckpt);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  if (samples > 0) c.prediction_samples = samples;

  TrainerState state = restore_state(ckpt);
  const SplitDatasets data = generate_splits(c.omega, c.seed, c.n_train, c.n_val, c.n_test, c.noise_var);
  RandomTape val_tape(c.seed, 2);
  const double val = validation_vfe(state, c, data.val, val_tape);
  RandomTape test_tape(c.seed, 3);
  const double acc =
      evaluate_accuracy(state.model, data.test.xs, data.test.ys, c.prediction_samples, test_tape);
  const DepthPMF q = depth_pmf(state.model.depth.law(state.model.store));
  const nlohmann::json j = {{"epoch", ckpt.epoch},
                            {"val_vfe", val},
                            {"test_accuracy", acc},
                            {"depth_posterior_mean", q.mean()},
                            {"depth_posterior_std", q.stddev()},
                            {"test_checksum", data.test.checksum}};
  if (!output.empty()) {
    fs::create_directories(output);
    write_text_file(fs::path(output) / "config.txt", to_text(c));
    write_text_file(fs::path(output) / "eval.json", j.dump(2) + "\n");
  }
  print_json(j);
  return kOk;
}

int cmd_gradcheck(const CommonArgs& args, const std::string& kind_name, double h, double tol) {
  TrainConfig c = load_config(args).base;
  if (!kind_name.empty()) c.prior_kind = parse_depth_kind(kind_name);
  if (!(h > 0.0) || !(tol > 0.0)) throw UsageError("--step and --tol must be positive");

  RandomTape tape(c.seed, 4);
  TrainerState state = initial_state(c, tape);
  auto& model = state.model;
  const DepthRange support = depth_support(model.depth.law(model.store));
  model.net.ensure_depth(model.store, support.hi, tape);
  const int n = std::min(8, c.n_train);
  const LabeledDataset data = generate({c.omega, n, c.seed, c.noise_var});
  const std::uint64_t noise_seed = tape.next_seed();
  const VfeOptions opts{true, c.support_cap};

  std::vector<double> grad(model.store.size(), 0.0);
  RandomTape noise(noise_seed);
  compute_vfe(model, c.prior(), data.xs, data.ys, data.size(), noise, support, opts, grad);
  auto objective = [&](std::span<const double> p) {
    VariationalModel m = model;
    m.store.assign(p);
    RandomTape t(noise_seed);
    return compute_vfe(m, c.prior(), data.xs, data.ys, data.size(), t, support, opts).total;
  };
  const auto report = finite_diff_check(objective, model.store.values(), grad, h, tol);
  nlohmann::json j = {{"prior_kind", to_string(c.prior_kind)},
                      {"parameters", model.store.size()},
                      {"support_lo", support.lo},
                      {"support_hi", support.hi},
                      {"max_rel_error", report.max_rel_error},
                      {"failing", report.failing},
                      {"non_finite", report.non_finite},
                      {"passed", report.passed()}};
  print_json(j);
  if (!args.output.empty()) {
    fs::create_directories(args.output);
    write_text_file(fs::path(args.output) / "config.txt", to_text(c));
    write_text_file(fs::path(args.output) / "gradcheck.json", j.dump(2) + "\n");
  }
  return report.passed() ? kOk : kRuntimeFailure;
}

int cmd_depth_pmf(const CommonArgs& args, int lmax) {
  const TrainConfig c = load_config(args).base;
  if (lmax < 0) throw UsageError("--lmax must be non-negative");
  const TruncNormalDepth normal{c.prior_mu, c.prior_sigma, 0.0, 1.0};
  const PoissonDepth poisson{c.prior_rate, 1.0};
  std::string csv = "L,normal_log_pmf,poisson_log_pmf\n";
  char buf[128];
  for (int L = 0; L <= lmax; ++L) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", L, untruncated_depth_log_pmf(normal, L),
                  untruncated_depth_log_pmf(poisson, L));
    csv += buf;
  }
  std::cout << csv;
  if (!args.output.empty()) {
    fs::create_directories(args.output);
    write_text_file(fs::path(args.output) / "depth_pmf.csv", csv);
    write_text_file(fs::path(args.output) / "config.txt", to_text(c));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational depth estimation for Bayesian MLPs on the spiral benchmark"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, suite_args, grad_args, pmf_args;
  auto* gen = app.add_subcommand("gen-data", "Write train/val/test spiral CSVs");
  add_common(gen, gen_args, true);

  auto* tr = app.add_subcommand("train", "Train one model and write its artifacts");
  add_common(tr, train_args, true);

  int threads = 1;
  auto* suite = app.add_subcommand("suite", "Sweep omegas x runs x both depth priors");
  add_common(suite, suite_args, true);
  suite->add_option("--threads", threads, "Parallel cells")->check(CLI::PositiveNumber);

  std::string checkpoint, eval_output;
  std::vector<std::string> eval_overrides;
  int samples = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on regenerated data");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--set", eval_overrides, "Override one config key, KEY=VALUE (repeatable)");
  ev->add_option("--output", eval_output, "Output directory");
  ev->add_option("--samples", samples, "Prediction samples (default from config)");

  std::string kind;
  double h = 1e-5, tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Compare the free-energy gradient with finite differences");
  add_common(gc, grad_args, false);
  gc->add_option("--kind", kind, "trunc_normal or poisson (default from config)");
  gc->add_option("--step", h, "Finite-difference step");
  gc->add_option("--tol", tol, "Relative tolerance");

  int lmax = 10;
  auto* pmf = app.add_subcommand("depth-pmf", "Print prior log-pmfs of both depth families");
  add_common(pmf, pmf_args, false);
  pmf->add_option("--lmax", lmax, "Largest depth to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*gen) return cmd_gen_data(gen_args);
    if (*tr) return cmd_train(train_args);
    if (*suite) return cmd_suite(suite_args, threads);
    if (*ev) return cmd_eval(checkpoint, eval_overrides, eval_output, samples);
    if (*gc) return cmd_gradcheck(grad_args, kind, h, tol);
    if (*pmf) return cmd_depth_pmf(pmf_args, lmax);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
