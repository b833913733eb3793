#include "depthbnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "depthbnn/errors.hpp"
#include "depthbnn/optim.hpp"

namespace depthbnn {

namespace {

using Field = std::variant<double TrainConfig::*, int TrainConfig::*, std::uint64_t TrainConfig::*,
                           DepthKind TrainConfig::*>;

struct Entry {
  std::string_view key;
  Field field;
};

// Order here is the order of to_text.
const Entry kEntries[] = {
    {"prior_kind", &TrainConfig::prior_kind},
    {"prior_mu", &TrainConfig::prior_mu},
    {"prior_sigma", &TrainConfig::prior_sigma},
    {"prior_rate", &TrainConfig::prior_rate},
    {"post_mu", &TrainConfig::post_mu},
    {"post_sigma", &TrainConfig::post_sigma},
    {"post_lower_q", &TrainConfig::post_lower_q},
    {"post_upper_q", &TrainConfig::post_upper_q},
    {"post_rate", &TrainConfig::post_rate},
    {"post_rate_upper_q", &TrainConfig::post_rate_upper_q},
    {"lr", &TrainConfig::lr},
    {"depth_lr", &TrainConfig::depth_lr},
    {"beta1", &TrainConfig::beta1},
    {"beta2", &TrainConfig::beta2},
    {"adam_eps", &TrainConfig::adam_eps},
    {"epochs", &TrainConfig::epochs},
    {"batch_size", &TrainConfig::batch_size},
    {"hidden_width", &TrainConfig::hidden_width},
    {"leaky_alpha", &TrainConfig::leaky_alpha},
    {"weight_prior_mean", &TrainConfig::weight_prior_mean},
    {"weight_prior_std", &TrainConfig::weight_prior_std},
    {"init_std", &TrainConfig::init_std},
    {"seed", &TrainConfig::seed},
    {"omega", &TrainConfig::omega},
    {"n_train", &TrainConfig::n_train},
    {"n_val", &TrainConfig::n_val},
    {"n_test", &TrainConfig::n_test},
    {"noise_var", &TrainConfig::noise_var},
    {"prediction_samples", &TrainConfig::prediction_samples},
    {"support_cap", &TrainConfig::support_cap},
    {"eval_every", &TrainConfig::eval_every},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParameterError("invalid value '" + std::string(value) + "' for key " + std::string(key));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename Config>
Config parse_lines(std::string_view text) {
  Config config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

}  // namespace

void apply_setting(TrainConfig& config, std::string_view key, std::string_view value) {
  for (const auto& entry : kEntries) {
    if (entry.key != key) continue;
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(config.*member)>;
          if constexpr (std::is_same_v<T, DepthKind>) {
            config.*member = parse_depth_kind(value);
          } else {
            config.*member = parse_number<T>(key, value);
          }
        },
        entry.field);
    return;
  }
  throw ParameterError("unknown config key: " + std::string(key));
}

void apply_setting(SuiteConfig& config, std::string_view key, std::string_view value) {
  if (key == "omegas") {
    config.omegas = parse_omega_list(value);
  } else if (key == "runs") {
    config.runs = parse_number<int>(key, value);
  } else {
    apply_setting(config.base, key, value);
  }
}

TrainConfig parse_train_config(std::string_view text) {
  // Suite keys are tolerated so one file can drive both commands.
  return parse_lines<SuiteConfig>(text).base;
}

SuiteConfig parse_suite_config(std::string_view text) { return parse_lines<SuiteConfig>(text); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string to_text(const TrainConfig& config) {
  std::string out;
  for (const auto& entry : kEntries) {
    out += entry.key;
    out += " = ";
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(config.*member)>;
          if constexpr (std::is_same_v<T, DepthKind>) {
            out += to_string(config.*member);
          } else if constexpr (std::is_same_v<T, double>) {
            out += format_double(config.*member);
          } else {
            out += std::to_string(config.*member);
          }
        },
        entry.field);
    out += '\n';
  }
  return out;
}

std::string to_text(const SuiteConfig& config) {
  std::string out = to_text(config.base);
  out += "omegas = ";
  for (std::size_t i = 0; i < config.omegas.size(); ++i) {
    if (i) out += ',';
    out += format_double(config.omegas[i]);
  }
  out += "\nruns = " + std::to_string(config.runs) + '\n';
  return out;
}

std::uint64_t config_hash(const TrainConfig& config) { return fnv1a(to_text(config)); }

std::vector<double> parse_omega_list(std::string_view text) {
  text = trim(text);
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    while (true) {
      const auto c = text.find(':');
      parts.push_back(parse_number<double>("omegas", trim(text.substr(0, c))));
      if (c == std::string_view::npos) break;
      text = text.substr(c + 1);
    }
    if (parts.size() < 2 || parts.size() > 3) throw ParameterError("omega range must be lo:hi or lo:hi:step");
    const double step = parts.size() == 3 ? parts[2] : 1.0;
    if (!(step > 0.0) || parts[1] < parts[0]) throw ParameterError("invalid omega range");
    const auto count = static_cast<int>((parts[1] - parts[0]) / step + 1e-9);
    for (int i = 0; i <= count; ++i) out.push_back(parts[0] + i * step);
  } else {
    while (!text.empty()) {
      const auto c = text.find(',');
      out.push_back(parse_number<double>("omegas", trim(text.substr(0, c))));
      if (c == std::string_view::npos) break;
      text = text.substr(c + 1);
    }
  }
  if (out.empty()) throw ParameterError("omega list is empty");
  for (double w : out) {
    if (!(w >= 0.0)) throw ParameterError("omega must be non-negative");
  }
  return out;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ParameterError(std::string(name) + " must be positive");
  };
  positive(prior_sigma, "prior_sigma");
  positive(prior_rate, "prior_rate");
  positive(post_sigma, "post_sigma");
  positive(post_rate, "post_rate");
  positive(lr, "lr");
  positive(depth_lr, "depth_lr");
  positive(adam_eps, "adam_eps");
  positive(weight_prior_std, "weight_prior_std");
  positive(init_std, "init_std");
  positive(noise_var, "noise_var");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ParameterError("beta1 and beta2 must lie in (0, 1)");
  }
  if (epochs < 0) throw ParameterError("epochs must be non-negative");
  if (batch_size <= 0 || hidden_width <= 0 || n_train <= 0 || n_val <= 0 || n_test <= 0 ||
      prediction_samples <= 0 || support_cap <= 0 || eval_every <= 0) {
    throw ParameterError("sizes, counts and intervals must be positive");
  }
  if (batch_size > n_train) throw ParameterError("batch_size must not exceed n_train");
  if (!(omega >= 0.0)) throw ParameterError("omega must be non-negative");
  TruncNormalDepth{prior_mu, prior_sigma, 0.0, 1.0}.validate();
  TruncNormalDepth{post_mu, post_sigma, post_lower_q, post_upper_q}.validate();
  PoissonDepth{post_rate, post_rate_upper_q}.validate();
}

NetworkShape TrainConfig::network_shape() const {
  NetworkShape shape;
  shape.hidden_width = hidden_width;
  shape.leaky_alpha = leaky_alpha;
  shape.prior = {weight_prior_mean, weight_prior_std};
  shape.init_std = init_std;
  return shape;
}

DepthLaw TrainConfig::prior() const {
  if (prior_kind == DepthKind::trunc_normal) return TruncNormalDepth{prior_mu, prior_sigma, 0.0, 1.0};
  return PoissonDepth{prior_rate, 1.0};
}

DepthInit TrainConfig::posterior_init() const {
  if (prior_kind == DepthKind::trunc_normal) {
    return {DepthKind::trunc_normal, post_mu, post_sigma, post_lower_q, post_upper_q};
  }
  return {DepthKind::poisson, post_rate, 0.0, 0.0, post_rate_upper_q};
}

AdamConfig TrainConfig::adam() const { return {lr, beta1, beta2, adam_eps}; }

}  // namespace depthbnn
