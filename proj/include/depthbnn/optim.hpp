#pragma once

// Parameter storage, Adam, finite-difference checking and checkpoint files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "depthbnn/dist.hpp"

namespace depthbnn {

/// Mean-field Gaussian posterior of one scalar, std = softplus(raw_rho).
struct VariationalWeight {
  double raw_mean = 0.0;
  double raw_rho = 0.0;
  double prior_mean = 0.0;
  double prior_std = 1.0;

  double mean() const { return raw_mean; }
  double std() const { return softplus(raw_rho); }
  GaussianPair pair() const { return {raw_mean, std(), prior_mean, prior_std}; }
};

/// Named set of parameter slots with an optional learning-rate override.
struct ParamGroup {
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // [begin, end)
  std::optional<double> lr_override;

  std::size_t count() const;
  bool contains(std::size_t index) const;
};

/// Flat, append-only vector of raw (unconstrained) parameters. Every slot is
/// allocated into exactly one group, so groups always partition the vector.
class ParameterStore {
 public:
  std::size_t add_group(std::string name, std::optional<double> lr_override = std::nullopt);
  /// Appends n slots to the given group and returns the offset of the first.
  std::size_t allocate(std::size_t group, std::size_t n, double fill = 0.0);

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(std::string_view name) const;

  void assign(std::span<const double> raw);

 private:
  std::vector<double> values_;
  std::vector<ParamGroup> groups_;
};

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers grow with the store; new slots
/// start at zero.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Throws NonFiniteGradient (and leaves everything untouched) if any
  /// gradient entry is NaN or infinite.
  void step(ParameterStore& store, std::span<const double> grads);
  void resize(std::size_t n);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(std::uint64_t step_count, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

using Objective = std::function<double(std::span<const double>)>;

struct FiniteDiffReport {
  std::vector<double> numeric;
  std::vector<double> analytic;
  std::vector<double> rel_errors;
  double max_rel_error = 0.0;
  std::vector<std::size_t> failing;     // rel error above tolerance
  std::vector<std::size_t> non_finite;  // objective blew up at a perturbed point
  bool passed() const { return failing.empty() && non_finite.empty(); }
};

/// Central differences of `objective` around `params`, compared against
/// `analytic`. The objective must replay identical noise on every call.
/// Relative error is |a - n| / max(|a|, |n|, abs_floor).
FiniteDiffReport finite_diff_check(const Objective& objective, std::span<const double> params,
                                   std::span<const double> analytic, double h, double tol,
                                   double abs_floor = 1e-6);

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::string depth_kind;  // "trunc_normal" | "poisson"
  std::vector<double> depth_params;
  std::vector<std::int64_t> layout;  // network shape and instantiated depth
  std::vector<double> params;
  std::uint64_t adam_steps = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

/// Writes via a temporary sibling file and rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 14695981039346656037ull);
std::uint64_t fnv1a(std::string_view text);

}  // namespace depthbnn
