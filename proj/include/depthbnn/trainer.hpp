#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthbnn/config.hpp"
#include "depthbnn/optim.hpp"
#include "depthbnn/spiral.hpp"
#include "depthbnn/vfe.hpp"

namespace depthbnn {

struct EpochRecord {
  int epoch = 0;
  double train_vfe = 0.0;
  std::optional<double> val_vfe;  // only on evaluation epochs
  double depth_mean = 0.0;
  double depth_std = 0.0;
  int support_size = 0;
};

struct Evaluation {
  int epoch = 0;
  double val_vfe = 0.0;
};

struct RunResult {
  double best_val_vfe = 0.0;
  int best_epoch = 0;
  double test_accuracy = 0.0;
  double depth_posterior_mean = 0.0;
  double depth_posterior_std = 0.0;
  DepthPMF depth_posterior;
  std::vector<EpochRecord> history;
  std::vector<Evaluation> evaluations;
  std::uint64_t train_checksum = 0;
  std::uint64_t val_checksum = 0;
  std::uint64_t test_checksum = 0;
  Checkpoint best;
};

/// Thrown when training cannot continue (non-finite loss or gradient).
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// When set, the best checkpoint is written here on every improvement.
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// The optimizer's working state; copyable for snapshots.
struct TrainerState {
  VariationalModel model;
  Adam adam;
};

TrainerState initial_state(const TrainConfig& config, RandomTape& tape);

/// One SVI step on a minibatch: freeze the support, grow the network, take
/// the VFE gradient and apply Adam. Returns the minibatch VFE.
VFEBreakdown train_step(TrainerState& state, const TrainConfig& config, const Matrix& x, std::span<const int> y,
                        std::size_t dataset_size, RandomTape& tape);

/// Full-dataset VFE with one noise draw; grows the network to the current
/// support first.
double validation_vfe(TrainerState& state, const TrainConfig& config, const LabeledDataset& data, RandomTape& tape);

RunResult train(const TrainConfig& config, const SplitDatasets& data, const TrainOptions& options = {});

/// Index of the smallest value; ties go to the earliest.
std::size_t select_best(std::span<const double> val_vfes);

Checkpoint make_checkpoint(const TrainerState& state, const TrainConfig& config, int epoch);
TrainerState restore_state(const Checkpoint& ckpt);
TrainConfig checkpoint_config(const Checkpoint& ckpt);

/// Fraction of consecutive moving-average pairs (window w) that do not increase.
double moving_average_nonincreasing_fraction(std::span<const double> values, std::size_t window);

struct SuiteCell {
  double omega = 0.0;
  int run = 0;
  DepthKind kind = DepthKind::trunc_normal;
  std::optional<RunResult> result;
  std::string error;
  std::uint64_t data_checksum = 0;
};

struct AggregateRow {
  double omega = 0.0;
  DepthKind kind = DepthKind::trunc_normal;
  int n_ok = 0;
  int n_failed = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double depth_mean_mean = 0.0;
  double depth_mean_std = 0.0;
  double depth_std_mean = 0.0;
  double depth_std_std = 0.0;
};

struct SuiteOptions {
  int threads = 1;
  /// Per-cell artifacts go to <output_root>/omega_<w>/run_<r>/<kind>/.
  std::optional<std::filesystem::path> output_root;
  std::function<void(const SuiteCell&)> on_cell;
};

/// Trains both depth families for each (omega, run) with seed = run index
/// (1-based) on identical data. Failures are recorded per cell.
std::vector<SuiteCell> run_suite(const SuiteConfig& config, const SuiteOptions& options = {});
std::vector<AggregateRow> aggregate(const std::vector<SuiteCell>& cells);

/// Sample mean and (n-1) standard deviation; the std of one value is 0.
std::pair<double, double> mean_and_std(std::span<const double> values);

}  // namespace depthbnn
