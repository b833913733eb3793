#include "depthbnn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "depthbnn/errors.hpp"
#include "depthbnn/report.hpp"

namespace depthbnn {

namespace {

// Stream ids carved out of one run seed.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 3;

Matrix gather_rows(const Matrix& xs, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), xs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xs.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

DepthRange frozen_support(const TrainerState& state, const TrainConfig& config) {
  const DepthRange support = depth_support(state.model.depth.law(state.model.store));
  if (support.hi > config.support_cap) {
    throw RunawayDepth("depth support reaches " + std::to_string(support.hi) + ", above support_cap " +
                       std::to_string(config.support_cap));
  }
  return support;
}

}  // namespace

TrainerState initial_state(const TrainConfig& config, RandomTape& tape) {
  config.validate();
  TrainerState state{make_model(config.posterior_init(), config.network_shape(), config.depth_lr, tape),
                     Adam(config.adam())};
  state.adam.resize(state.model.store.size());
  return state;
}

VFEBreakdown train_step(TrainerState& state, const TrainConfig& config, const Matrix& x, std::span<const int> y,
                        std::size_t dataset_size, RandomTape& tape) {
  auto& model = state.model;
  const DepthRange support = frozen_support(state, config);
  model.net.ensure_depth(model.store, support.hi, tape);
  state.adam.resize(model.store.size());

  std::vector<double> grad(model.store.size(), 0.0);
  const VFEBreakdown vfe = compute_vfe(model, config.prior(), x, y, dataset_size, tape, support,
                                       VfeOptions{true, config.support_cap}, grad);
  if (!std::isfinite(vfe.total)) throw TrainingAborted("non-finite free energy");
  try {
    state.adam.step(model.store, grad);
  } catch (const NonFiniteGradient& e) {
    throw TrainingAborted(e.what());
  }
  return vfe;
}

double validation_vfe(TrainerState& state, const TrainConfig& config, const LabeledDataset& data, RandomTape& tape) {
  auto& model = state.model;
  const DepthRange support = frozen_support(state, config);
  model.net.ensure_depth(model.store, support.hi, tape);
  state.adam.resize(model.store.size());
  return compute_vfe(model, config.prior(), data.xs, data.ys, data.size(), tape, support,
                     VfeOptions{true, config.support_cap})
      .total;
}

std::size_t select_best(std::span<const double> val_vfes) {
  if (val_vfes.empty()) throw ContractViolation("select_best: no validation evaluations");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_vfes.size(); ++i) {
    if (val_vfes[i] < val_vfes[best]) best = i;
  }
  return best;
}

Checkpoint make_checkpoint(const TrainerState& state, const TrainConfig& config, int epoch) {
  const auto& model = state.model;
  Checkpoint ckpt;
  ckpt.config_text = to_text(config);
  ckpt.config_hash = fnv1a(ckpt.config_text);
  ckpt.epoch = static_cast<std::uint64_t>(epoch);
  ckpt.depth_kind = to_string(model.depth.kind);
  const DepthLaw law = model.depth.law(model.store);
  if (const auto* tn = std::get_if<TruncNormalDepth>(&law)) {
    ckpt.depth_params = {tn->mu, tn->sigma};
  } else {
    ckpt.depth_params = {std::get<PoissonDepth>(law).rate};
  }
  const auto& shape = model.net.shape();
  ckpt.layout = {shape.input_dim, shape.hidden_width, shape.num_classes, model.net.max_depth(),
                 static_cast<std::int64_t>(model.depth.param_count())};
  const auto values = model.store.values();
  ckpt.params.assign(values.begin(), values.end());
  ckpt.adam_steps = state.adam.step_count();
  ckpt.adam_m = state.adam.first_moment();
  ckpt.adam_v = state.adam.second_moment();
  return ckpt;
}

TrainConfig checkpoint_config(const Checkpoint& ckpt) { return parse_train_config(ckpt.config_text); }

TrainerState restore_state(const Checkpoint& ckpt) {
  const TrainConfig config = checkpoint_config(ckpt);
  if (ckpt.layout.size() != 5) throw std::runtime_error("checkpoint layout is malformed");
  NetworkShape shape = config.network_shape();
  shape.input_dim = static_cast<int>(ckpt.layout[0]);
  shape.hidden_width = static_cast<int>(ckpt.layout[1]);
  shape.num_classes = static_cast<int>(ckpt.layout[2]);
  const int depth = static_cast<int>(ckpt.layout[3]);
  const auto depth_count = static_cast<std::size_t>(ckpt.layout[4]);

  const DepthInit init = config.posterior_init();
  if (to_string(init.kind) != ckpt.depth_kind) throw std::runtime_error("checkpoint depth kind disagrees with its config");

  ParameterStore store;
  const std::size_t depth_group = store.add_group("depth", config.depth_lr);
  const std::size_t weight_group = store.add_group("weights");
  if (ckpt.params.size() < depth_count) throw std::runtime_error("checkpoint parameter block too small");
  store.allocate(depth_group, depth_count);
  store.allocate(weight_group, ckpt.params.size() - depth_count);
  store.assign(ckpt.params);

  UnboundedNetwork net = UnboundedNetwork::restore(shape, weight_group, depth_count, depth);
  const auto& last = net.output_heads().back();
  if (last.b_rho + static_cast<std::size_t>(last.out_dim) != store.size()) {
    throw std::runtime_error("checkpoint parameter count does not match its layout");
  }
  DepthPosterior posterior{init.kind, 0, init.kind == DepthKind::poisson ? 0.0 : init.lower_q, init.upper_q};
  TrainerState state{VariationalModel{std::move(store), posterior, std::move(net)}, Adam(config.adam())};
  state.adam.restore(ckpt.adam_steps, ckpt.adam_m, ckpt.adam_v);
  return state;
}

RunResult train(const TrainConfig& config, const SplitDatasets& data, const TrainOptions& options) {
  config.validate();
  if (static_cast<int>(data.train.size()) != config.n_train || static_cast<int>(data.val.size()) != config.n_val ||
      static_cast<int>(data.test.size()) != config.n_test) {
    throw ParameterError("dataset sizes do not match the configuration");
  }

  RandomTape tape(config.seed, kTrainStream);
  TrainerState state = initial_state(config, tape);

  RunResult result;
  result.train_checksum = data.train.checksum;
  result.val_checksum = data.val.checksum;
  result.test_checksum = data.test.checksum;

  auto evaluate = [&](int epoch) {
    const double val = validation_vfe(state, config, data.val, tape);
    if (!std::isfinite(val)) throw TrainingAborted("non-finite validation free energy at epoch " + std::to_string(epoch));
    result.evaluations.push_back({epoch, val});
    if (result.evaluations.size() == 1 || val < result.best_val_vfe) {
      result.best_val_vfe = val;
      result.best_epoch = epoch;
      result.best = make_checkpoint(state, config, epoch);
      if (options.checkpoint_path) save_checkpoint(*options.checkpoint_path, result.best);
    }
    return val;
  };

  evaluate(0);

  const auto n = static_cast<std::size_t>(config.n_train);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<int> yb;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    tape.shuffle(order);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      const Matrix xb = gather_rows(data.train.xs, rows);
      yb.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) yb[i] = data.train.ys[rows[i]];
      sum += train_step(state, config, xb, yb, n, tape).total;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_vfe = sum / batches;
    const DepthPMF q = depth_pmf(state.model.depth.law(state.model.store));
    rec.depth_mean = q.mean();
    rec.depth_std = q.stddev();
    rec.support_size = q.support.size();
    if (epoch % config.eval_every == 0 || epoch == config.epochs) rec.val_vfe = evaluate(epoch);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  const TrainerState best = restore_state(result.best);
  result.depth_posterior = depth_pmf(best.model.depth.law(best.model.store));
  result.depth_posterior_mean = result.depth_posterior.mean();
  result.depth_posterior_std = result.depth_posterior.stddev();
  RandomTape test_tape(config.seed, kTestStream);
  result.test_accuracy =
      evaluate_accuracy(best.model, data.test.xs, data.test.ys, config.prediction_samples, test_tape);
  return result;
}

double moving_average_nonincreasing_fraction(std::span<const double> values, std::size_t window) {
  if (window == 0 || values.size() <= window) throw ParameterError("need more values than the window length");
  // Consecutive window means differ by (values[t + w] - values[t]) / w.
  std::size_t ok = 0;
  const std::size_t pairs = values.size() - window;
  for (std::size_t t = 0; t < pairs; ++t) {
    if (values[t + window] <= values[t]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(pairs);
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  // Identical values must give exactly zero spread, which rounding in the sum can break.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    return {values.front(), 0.0};
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<SuiteCell> run_suite(const SuiteConfig& config, const SuiteOptions& options) {
  if (config.runs < 1) throw ParameterError("runs must be at least 1");
  if (config.omegas.empty()) throw ParameterError("no omegas to sweep");
  config.base.validate();

  std::vector<SuiteCell> cells;
  for (double omega : config.omegas) {
    for (int run = 1; run <= config.runs; ++run) {
      for (DepthKind kind : {DepthKind::trunc_normal, DepthKind::poisson}) {
        SuiteCell cell;
        cell.omega = omega;
        cell.run = run;
        cell.kind = kind;
        cells.push_back(cell);
      }
    }
  }

  std::mutex callback_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SuiteCell& cell = cells[i];
      TrainConfig c = config.base;
      c.omega = cell.omega;
      c.seed = static_cast<std::uint64_t>(cell.run);
      c.prior_kind = cell.kind;
      try {
        const SplitDatasets data = generate_splits(c.omega, c.seed, c.n_train, c.n_val, c.n_test, c.noise_var);
        cell.data_checksum = data.train.checksum ^ (data.val.checksum * 3) ^ (data.test.checksum * 7);
        std::optional<std::filesystem::path> dir;
        if (options.output_root) {
          std::ostringstream name;
          name << "omega_" << cell.omega;
          dir = *options.output_root / name.str() / ("run_" + std::to_string(cell.run)) / to_string(cell.kind);
          std::filesystem::create_directories(*dir);
        }
        TrainOptions topts;
        if (dir) topts.checkpoint_path = *dir / "checkpoint.bin";
        cell.result = train(c, data, topts);
        if (dir) write_run_artifacts(*dir, c, *cell.result);
      } catch (const std::exception& e) {
        cell.result.reset();
        cell.error = e.what();
      }
      if (options.on_cell) {
        std::lock_guard lock(callback_mutex);
        options.on_cell(cell);
      }
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return cells;
}

std::vector<AggregateRow> aggregate(const std::vector<SuiteCell>& cells) {
  std::vector<AggregateRow> rows;
  std::vector<double> omegas;
  for (const auto& c : cells) {
    if (std::find(omegas.begin(), omegas.end(), c.omega) == omegas.end()) omegas.push_back(c.omega);
  }
  for (double omega : omegas) {
    for (DepthKind kind : {DepthKind::trunc_normal, DepthKind::poisson}) {
      AggregateRow row;
      row.omega = omega;
      row.kind = kind;
      std::vector<double> acc, dmean, dstd;
      bool any = false;
      for (const auto& c : cells) {
        if (c.omega != omega || c.kind != kind) continue;
        any = true;
        if (!c.result) {
          ++row.n_failed;
          continue;
        }
        ++row.n_ok;
        acc.push_back(c.result->test_accuracy);
        dmean.push_back(c.result->depth_posterior_mean);
        dstd.push_back(c.result->depth_posterior_std);
      }
      if (!any) continue;
      std::tie(row.accuracy_mean, row.accuracy_std) = mean_and_std(acc);
      std::tie(row.depth_mean_mean, row.depth_mean_std) = mean_and_std(dmean);
      std::tie(row.depth_std_mean, row.depth_std_std) = mean_and_std(dstd);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace depthbnn
