#include "depthbnn/spiral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "depthbnn/errors.hpp"
#include "depthbnn/tape.hpp"

namespace depthbnn {

void SpiralConfig::validate() const {
  if (!(omega >= 0.0)) throw ParameterError("omega must be non-negative");
  if (n <= 0) throw ParameterError("sample count must be positive");
  if (!(noise_var > 0.0)) throw ParameterError("noise_var must be positive");
}

std::array<double, 2> LabeledDataset::center(std::size_t i) const {
  if (radius.size() != ys.size()) throw ContractViolation("dataset has no generation metadata");
  const double sign = ys[i] == 1 ? 1.0 : -1.0;
  const double u = radius[i];
  const double angle = omega * u * std::numbers::pi / 2.0;
  return {sign * u * std::cos(angle), sign * u * std::sin(angle)};
}

std::uint64_t dataset_checksum(const Matrix& xs, std::span<const int> ys) {
  std::uint64_t h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(xs.data()),
                                    static_cast<std::size_t>(xs.size()) * sizeof(double)));
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(ys.data()), ys.size() * sizeof(int)), h);
}

LabeledDataset generate(const SpiralConfig& config) {
  config.validate();
  RandomTape tape(config.seed);
  const double noise_std = std::sqrt(config.noise_var);

  LabeledDataset data;
  data.omega = config.omega;
  data.xs.resize(config.n, 2);
  data.ys.resize(static_cast<std::size_t>(config.n));
  data.radius.resize(static_cast<std::size_t>(config.n));
  for (int i = 0; i < config.n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double u = std::sqrt(tape.uniform());
    const bool positive = tape.coin();
    data.radius[idx] = u;
    data.ys[idx] = positive ? 1 : 0;
    const auto c = data.center(idx);
    data.xs(i, 0) = c[0] + noise_std * tape.normal();
    data.xs(i, 1) = c[1] + noise_std * tape.normal();
  }
  data.checksum = dataset_checksum(data.xs, data.ys);
  return data;
}

SplitDatasets generate_splits(double omega, std::uint64_t seed, int n_train, int n_val, int n_test,
                              double noise_var) {
  // One stream per split so the three sets are independent and individually reproducible.
  auto split_seed = [seed](std::uint64_t split) { return RandomTape(seed, split).next_seed(); };
  return {generate({omega, n_train, split_seed(0), noise_var}), generate({omega, n_val, split_seed(1), noise_var}),
          generate({omega, n_test, split_seed(2), noise_var})};
}

double radius_distribution_check(std::span<const double> radii) {
  if (radii.size() < 1000) throw ParameterError("radius_distribution_check needs at least 1000 samples");
  std::vector<double> sq(radii.size());
  std::transform(radii.begin(), radii.end(), sq.begin(), [](double r) { return r * r; });
  std::sort(sq.begin(), sq.end());
  const auto n = static_cast<double>(sq.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double f = std::clamp(sq[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical_value_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "x1,x2,y\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    os << data.xs(r, 0) << ',' << data.xs(r, 1) << ',' << data.ys[i] << '\n';
  }
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "x1,x2,y") throw std::runtime_error(path.string() + ": expected header x1,x2,y");
  std::vector<std::array<double, 2>> rows;
  std::vector<int> ys;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::array<double, 2> x{};
    int y = 0;
    char c1 = 0, c2 = 0;
    if (!(ls >> x[0] >> c1 >> x[1] >> c2 >> y) || c1 != ',' || c2 != ',' || (y != 0 && y != 1)) {
      throw std::runtime_error(path.string() + ": malformed row: " + line);
    }
    rows.push_back(x);
    ys.push_back(y);
  }
  LabeledDataset data;
  data.xs.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.xs(static_cast<Eigen::Index>(i), 0) = rows[i][0];
    data.xs(static_cast<Eigen::Index>(i), 1) = rows[i][1];
  }
  data.ys = std::move(ys);
  data.checksum = dataset_checksum(data.xs, data.ys);
  return data;
}

}  // namespace depthbnn
