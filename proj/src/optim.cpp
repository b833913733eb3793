#include "depthbnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "depthbnn/errors.hpp"

namespace depthbnn {

std::size_t ParamGroup::count() const {
  std::size_t n = 0;
  for (const auto& [b, e] : ranges) n += e - b;
  return n;
}

bool ParamGroup::contains(std::size_t index) const {
  return std::any_of(ranges.begin(), ranges.end(),
                     [&](const auto& r) { return index >= r.first && index < r.second; });
}

std::size_t ParameterStore::add_group(std::string name, std::optional<double> lr_override) {
  if (lr_override && !(*lr_override >= 0.0)) throw ParameterError("group learning rate must be >= 0");
  groups_.push_back({std::move(name), {}, lr_override});
  return groups_.size() - 1;
}

std::size_t ParameterStore::allocate(std::size_t group, std::size_t n, double fill) {
  if (group >= groups_.size()) throw ContractViolation("allocate: unknown parameter group");
  const std::size_t offset = values_.size();
  values_.resize(offset + n, fill);
  auto& ranges = groups_[group].ranges;
  if (!ranges.empty() && ranges.back().second == offset) {
    ranges.back().second = offset + n;
  } else {
    ranges.emplace_back(offset, offset + n);
  }
  return offset;
}

const ParamGroup& ParameterStore::group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ContractViolation("no parameter group named " + std::string(name));
}

void ParameterStore::assign(std::span<const double> raw) {
  if (raw.size() != values_.size()) throw ContractViolation("assign: parameter count mismatch");
  std::copy(raw.begin(), raw.end(), values_.begin());
}

void Adam::resize(std::size_t n) {
  if (n < m_.size()) throw ContractViolation("Adam state cannot shrink");
  m_.resize(n, 0.0);
  v_.resize(n, 0.0);
}

void Adam::restore(std::uint64_t step_count, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw ContractViolation("Adam restore: moment size mismatch");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::step(ParameterStore& store, std::span<const double> grads) {
  if (grads.size() != store.size()) throw ContractViolation("Adam: gradient length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NonFiniteGradient(i);
  }
  resize(store.size());
  ++step_count_;
  const auto t = static_cast<double>(step_count_);
  const double corr1 = 1.0 - std::pow(config_.beta1, t);
  const double corr2 = 1.0 - std::pow(config_.beta2, t);

  auto params = store.values();
  for (const auto& group : store.groups()) {
    const double lr = group.lr_override.value_or(config_.lr);
    for (const auto& [begin, end] : group.ranges) {
      for (std::size_t i = begin; i < end; ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / corr1;
        const double v_hat = v_[i] / corr2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      }
    }
  }
}

FiniteDiffReport finite_diff_check(const Objective& objective, std::span<const double> params,
                                   std::span<const double> analytic, double h, double tol,
                                   double abs_floor) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_check: step must be positive");
  if (analytic.size() != params.size()) throw ContractViolation("finite_diff_check: gradient length mismatch");

  FiniteDiffReport report;
  report.analytic.assign(analytic.begin(), analytic.end());
  report.numeric.resize(params.size());
  report.rel_errors.resize(params.size());
  std::vector<double> x(params.begin(), params.end());

  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = objective(x);
    x[i] = orig - h;
    const double down = objective(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.numeric[i] = std::numeric_limits<double>::quiet_NaN();
      report.rel_errors[i] = std::numeric_limits<double>::infinity();
      report.non_finite.push_back(i);
      continue;
    }
    const double num = (up - down) / (2.0 * h);
    report.numeric[i] = num;
    const double denom = std::max({std::abs(analytic[i]), std::abs(num), abs_floor});
    const double rel = std::abs(analytic[i] - num) / denom;
    report.rel_errors[i] = rel;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    if (!(rel <= tol)) report.failing.push_back(i);
  }
  return report;
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

namespace {

constexpr std::string_view kMagic = "depthbnn-checkpoint v1";

template <typename T>
void write_block(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_block(std::istream& is, std::size_t n) {
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

// Layout: a text header of key=value lines terminated by "---", then the raw
// payload blocks in header order (config text, depth params, layout, params,
// adam m, adam v). Doubles are stored bit-exact in native byte order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << kMagic << '\n'
       << "config_hash=" << ckpt.config_hash << '\n'
       << "epoch=" << ckpt.epoch << '\n'
       << "depth_kind=" << ckpt.depth_kind << '\n'
       << "adam_steps=" << ckpt.adam_steps << '\n'
       << "config_bytes=" << ckpt.config_text.size() << '\n'
       << "depth_params=" << ckpt.depth_params.size() << '\n'
       << "layout=" << ckpt.layout.size() << '\n'
       << "params=" << ckpt.params.size() << '\n'
       << "adam_m=" << ckpt.adam_m.size() << '\n'
       << "adam_v=" << ckpt.adam_v.size() << '\n'
       << "---\n";
    os.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    write_block(os, ckpt.depth_params);
    write_block(os, ckpt.layout);
    write_block(os, ckpt.params);
    write_block(os, ckpt.adam_m);
    write_block(os, ckpt.adam_v);
    os.flush();
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kMagic) throw std::runtime_error(path.string() + " is not a depthbnn checkpoint");

  Checkpoint ckpt;
  std::size_t n_config = 0, n_depth = 0, n_layout = 0, n_params = 0, n_m = 0, n_v = 0;
  while (std::getline(is, line) && line != "---") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed checkpoint header line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    std::istringstream vs(value);
    if (key == "config_hash") vs >> ckpt.config_hash;
    else if (key == "epoch") vs >> ckpt.epoch;
    else if (key == "depth_kind") ckpt.depth_kind = value;
    else if (key == "adam_steps") vs >> ckpt.adam_steps;
    else if (key == "config_bytes") vs >> n_config;
    else if (key == "depth_params") vs >> n_depth;
    else if (key == "layout") vs >> n_layout;
    else if (key == "params") vs >> n_params;
    else if (key == "adam_m") vs >> n_m;
    else if (key == "adam_v") vs >> n_v;
    else throw std::runtime_error("unknown checkpoint header key: " + key);
  }
  if (line != "---") throw std::runtime_error("checkpoint header not terminated");

  ckpt.config_text.resize(n_config);
  is.read(ckpt.config_text.data(), static_cast<std::streamsize>(n_config));
  ckpt.depth_params = read_block<double>(is, n_depth);
  ckpt.layout = read_block<std::int64_t>(is, n_layout);
  ckpt.params = read_block<double>(is, n_params);
  ckpt.adam_m = read_block<double>(is, n_m);
  ckpt.adam_v = read_block<double>(is, n_v);
  if (fnv1a(ckpt.config_text) != ckpt.config_hash) throw std::runtime_error("checkpoint config hash mismatch");
  return ckpt;
}

}  // namespace depthbnn
