#pragma once

// Experiment configuration. The file format is one `key = value` per line,
// `#` starts a comment, unknown keys are errors. `to_text` emits every key in
// a fixed order, so the text doubles as the resolved config written beside
// each artifact and as the input of the config hash.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "depthbnn/net.hpp"
#include "depthbnn/vfe.hpp"

namespace depthbnn {

struct TrainConfig {
  DepthKind prior_kind = DepthKind::trunc_normal;

  // Depth prior.
  double prior_mu = 0.0;
  double prior_sigma = 1.15;
  double prior_rate = 0.5;

  // Initial depth posterior.
  double post_mu = 0.0;
  double post_sigma = 1.8;
  double post_lower_q = 0.025;
  double post_upper_q = 0.975;
  double post_rate = 1.0;
  double post_rate_upper_q = 0.95;

  // Optimizer.
  double lr = 0.005;
  double depth_lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 20000;
  int batch_size = 256;

  // Network.
  int hidden_width = 32;
  double leaky_alpha = 0.1;
  double weight_prior_mean = 0.0;
  double weight_prior_std = 1.0;
  double init_std = 0.05;

  // Data and run control.
  std::uint64_t seed = 1;
  double omega = 0.0;
  int n_train = 1024;
  int n_val = 1024;
  int n_test = 1024;
  double noise_var = 4e-4;
  int prediction_samples = 10;
  int support_cap = 64;
  int eval_every = 100;

  void validate() const;
  NetworkShape network_shape() const;
  DepthLaw prior() const;
  DepthInit posterior_init() const;
  AdamConfig adam() const;
};

/// Sweep settings; the suite reads the same file as TrainConfig.
struct SuiteConfig {
  TrainConfig base;
  std::vector<double> omegas{0.0};
  int runs = 5;
};

/// Applies one `key=value` assignment. Throws ParameterError on unknown keys
/// or unparsable values.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);
void apply_setting(SuiteConfig& config, std::string_view key, std::string_view value);

TrainConfig parse_train_config(std::string_view text);
SuiteConfig parse_suite_config(std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

std::string to_text(const TrainConfig& config);
std::string to_text(const SuiteConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

/// Parses "0,1,2" or the inclusive range "0:30" (optionally "0:30:5").
std::vector<double> parse_omega_list(std::string_view text);

}  // namespace depthbnn
