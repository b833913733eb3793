#pragma once

// Two-class spiral data: t ~ U[0,1], u = sqrt(t), y ~ U{-1,+1},
// x ~ N(y u [cos(w u pi/2), sin(w u pi/2)], noise_var I). Labels stored as {0,1}.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "depthbnn/net.hpp"

namespace depthbnn {

struct SpiralConfig {
  double omega = 0.0;
  int n = 1024;
  std::uint64_t seed = 0;
  double noise_var = 4e-4;

  void validate() const;
};

struct LabeledDataset {
  Matrix xs;             // n x 2
  std::vector<int> ys;   // 0 or 1
  std::vector<double> radius;  // noiseless radius u of each row, when generated
  double omega = 0.0;
  std::uint64_t checksum = 0;

  std::size_t size() const { return ys.size(); }
  /// Noiseless curve point for row i (requires generation metadata).
  std::array<double, 2> center(std::size_t i) const;
};

/// Content hash over the coordinates and labels.
std::uint64_t dataset_checksum(const Matrix& xs, std::span<const int> ys);

LabeledDataset generate(const SpiralConfig& config);

struct SplitDatasets {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Independent train/validation/test draws for one (seed, omega).
SplitDatasets generate_splits(double omega, std::uint64_t seed, int n_train, int n_val, int n_test,
                              double noise_var = 4e-4);

/// Kolmogorov-Smirnov statistic of the squared radii against U[0,1].
double radius_distribution_check(std::span<const double> radii);
/// Asymptotic KS critical value at the 1% level for n samples.
double ks_critical_value_1pct(std::size_t n);

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace depthbnn
