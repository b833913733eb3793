#include "depthbnn/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "depthbnn/errors.hpp"

namespace depthbnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kQuantileTol = 1e-10;
constexpr double kMaxDepthExtent = 1e7;

double log_std_normal_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Derivatives of ln(Phi(b) - Phi(a)) with a = (lo - mu)/sigma, b = (hi - mu)/sigma,
// with respect to (mu, sigma). Infinite ends contribute nothing.
std::array<double, 2> log_interval_grad(double a, double b, double sigma) {
  const double lm = log_std_normal_interval(a, b);
  const double ra = std::isfinite(a) ? std::exp(log_std_normal_pdf(a) - lm) : 0.0;
  const double rb = std::isfinite(b) ? std::exp(log_std_normal_pdf(b) - lm) : 0.0;
  const double a_ra = std::isfinite(a) ? a * ra : 0.0;
  const double b_rb = std::isfinite(b) ? b * rb : 0.0;
  return {(ra - rb) / sigma, (a_ra - b_rb) / sigma};
}

double standardize(double x, double mu, double sigma) {
  return std::isinf(x) ? x : (x - mu) / sigma;
}

// ln of the mass the (untruncated-by-quantile) half-normal assigns to [lo, hi],
// relative to the full half line.
double log_half_normal_mass(double mu, double sigma, double lo, double hi) {
  return log_std_normal_interval(standardize(lo, mu, sigma), standardize(hi, mu, sigma)) -
         log_std_normal_interval(-mu / sigma, kInf);
}

// Normalizing interval [lo, hi] in depth units for a discretized normal law.
std::array<double, 2> normalizer_interval(const TruncNormalDepth& d, DepthRange support) {
  if (d.full_support()) return {0.0, kInf};
  return {static_cast<double>(support.lo), static_cast<double>(support.hi) + 1.0};
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void TruncNormalDepth::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be positive");
  if (!std::isfinite(mu)) throw ParameterError("mu must be finite");
  check_probability(lower_q, "lower_q");
  check_probability(upper_q, "upper_q");
  if (!(lower_q < upper_q) || lower_q == 1.0) {
    throw ParameterError("quantile band requires 0 <= lower_q < upper_q <= 1");
  }
}

void PoissonDepth::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ParameterError("rate must be positive");
  if (!(upper_q > 0.0 && upper_q <= 1.0)) throw ParameterError("upper_q must lie in (0, 1]");
}

double DepthPMF::prob(int L) const {
  if (!support.contains(L)) return 0.0;
  return probs[static_cast<std::size_t>(L - support.lo)];
}

double DepthPMF::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) m += probs[i] * (support.lo + static_cast<int>(i));
  return m;
}

double DepthPMF::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double dl = support.lo + static_cast<int>(i) - m;
    v += probs[i] * dl * dl;
  }
  return v;
}

double DepthPMF::stddev() const { return std::sqrt(variance()); }

double std_normal_pdf(double x) { return std::exp(log_std_normal_pdf(x)); }

double std_normal_cdf(double x) {
  if (!std::isfinite(x)) throw DomainError("std_normal_cdf: non-finite input");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double log_std_normal_sf(double x) {
  if (x == kInf) return -kInf;
  if (x == -kInf) return 0.0;
  if (x < 0.0) return std::log1p(-0.5 * std::erfc(-x / std::numbers::sqrt2));
  if (x < 35.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  // Asymptotic Mills-ratio series; erfc underflows out here.
  const double z = 1.0 / (x * x);
  const double series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z)));
  return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double log_std_normal_interval(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a >= 0.0) {
    const double la = log_std_normal_sf(a);
    const double lb = log_std_normal_sf(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b <= 0.0) {
    const double la = log_std_normal_sf(-b);
    const double lb = log_std_normal_sf(-a);
    return la + std::log1p(-std::exp(lb - la));
  }
  const double tails = std::exp(log_std_normal_sf(b)) + std::exp(log_std_normal_sf(-a));
  return std::log1p(-tails);
}

double trunc_normal_cdf(double mu, double sigma, double x) {
  if (x <= 0.0) return 0.0;
  if (x == kInf) return 1.0;
  return std::exp(log_half_normal_mass(mu, sigma, 0.0, x));
}

double trunc_normal_quantile(double mu, double sigma, double p) {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return kInf;

  // Lower half: compare the CDF. Upper half: compare the log survival, which
  // stays accurate for p close to 1.
  const bool use_sf = p > 0.5;
  const double log_target = std::log1p(-p);
  auto below_target = [&](double x) {
    if (use_sf) return log_half_normal_mass(mu, sigma, x, kInf) > log_target;
    return trunc_normal_cdf(mu, sigma, x) < p;
  };

  double lo = 0.0;
  double hi = std::max(1.0, mu + sigma);
  while (below_target(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > kMaxDepthExtent) throw ParameterError("quantile beyond representable depth range");
  }
  while (hi - lo > kQuantileTol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (below_target(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

DepthRange depth_support(const TruncNormalDepth& d) {
  d.validate();
  const double x_lo = trunc_normal_quantile(d.mu, d.sigma, d.lower_q);
  const double x_hi = d.upper_q < 1.0 ? trunc_normal_quantile(d.mu, d.sigma, d.upper_q)
                                      : trunc_normal_quantile(d.mu, d.sigma, 1.0 - kUntruncatedTail);
  const int lo = static_cast<int>(std::floor(x_lo));
  const int hi = std::max(lo, static_cast<int>(std::ceil(x_hi)) - 1);
  return {lo, hi};
}

DepthRange depth_support(const PoissonDepth& d) {
  d.validate();
  const int limit = static_cast<int>(std::min(kMaxDepthExtent, 20.0 * d.rate + 1000.0));
  if (d.upper_q < 1.0) {
    double cdf = 0.0;
    for (int k = 0; k < limit; ++k) {
      cdf += std::exp(poisson_log_pmf(d.rate, k));
      if (cdf >= d.upper_q) return {0, k};
    }
    return {0, limit};
  }
  // Untruncated: stop once the remaining tail is below kUntruncatedTail.
  // For k + 2 >= 2 rate the tail past k is at most 2 pmf(k + 1).
  for (int k = 0; k < limit; ++k) {
    if (k + 2 >= 2.0 * d.rate && 2.0 * std::exp(poisson_log_pmf(d.rate, k + 1)) < kUntruncatedTail) {
      return {0, k};
    }
  }
  return {0, limit};
}

DepthRange depth_support(const DepthLaw& d) {
  return std::visit([](const auto& law) { return depth_support(law); }, d);
}

double poisson_log_pmf(double rate, int L) {
  if (L < 0) return -kInf;
  return L * std::log(rate) - rate - std::lgamma(L + 1.0);
}

double trunc_normal_depth_log_pmf(const TruncNormalDepth& d, int L) {
  d.validate();
  if (L < 0) return -kInf;
  DepthRange support{0, std::numeric_limits<int>::max() - 1};
  if (!d.full_support()) {
    support = depth_support(d);
    if (!support.contains(L)) return -kInf;
  }
  const auto [lo, hi] = normalizer_interval(d, support);
  return log_std_normal_interval((L - d.mu) / d.sigma, (L + 1.0 - d.mu) / d.sigma) -
         log_std_normal_interval(standardize(lo, d.mu, d.sigma), standardize(hi, d.mu, d.sigma));
}

double trunc_normal_depth_pmf(const TruncNormalDepth& d, int L) {
  return std::exp(trunc_normal_depth_log_pmf(d, L));
}

std::array<double, 2> trunc_normal_depth_log_pmf_grad(const TruncNormalDepth& d, int L) {
  d.validate();
  DepthRange support{0, std::numeric_limits<int>::max() - 1};
  if (!d.full_support()) support = depth_support(d);
  if (L < 0 || !support.contains(L)) throw DomainError("log pmf gradient requested outside the support");
  const auto [lo, hi] = normalizer_interval(d, support);
  const auto cell = log_interval_grad((L - d.mu) / d.sigma, (L + 1.0 - d.mu) / d.sigma, d.sigma);
  const auto norm = log_interval_grad(standardize(lo, d.mu, d.sigma), standardize(hi, d.mu, d.sigma), d.sigma);
  return {cell[0] - norm[0], cell[1] - norm[1]};
}

DepthPMF depth_pmf(const DepthLaw& d) { return depth_pmf(d, depth_support(d)); }

DepthPMF depth_pmf(const DepthLaw& d, DepthRange support) {
  if (support.lo < 0 || support.hi < support.lo) throw ParameterError("invalid depth support");
  DepthPMF out{support, std::vector<double>(static_cast<std::size_t>(support.size()))};
  std::vector<double> logw(out.probs.size());

  if (const auto* tn = std::get_if<TruncNormalDepth>(&d)) {
    tn->validate();
    for (int L = support.lo; L <= support.hi; ++L) {
      logw[static_cast<std::size_t>(L - support.lo)] =
          log_std_normal_interval((L - tn->mu) / tn->sigma, (L + 1.0 - tn->mu) / tn->sigma);
    }
  } else {
    const auto& po = std::get<PoissonDepth>(d);
    po.validate();
    for (int L = support.lo; L <= support.hi; ++L) {
      logw[static_cast<std::size_t>(L - support.lo)] = poisson_log_pmf(po.rate, L);
    }
  }

  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) throw DomainError("depth pmf has no mass on the requested support");
  double total = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    out.probs[i] = std::exp(logw[i] - top);
    total += out.probs[i];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

std::vector<std::vector<double>> depth_pmf_jacobian(const DepthLaw& d, DepthRange support) {
  const DepthPMF q = depth_pmf(d, support);
  const std::size_t n = q.probs.size();

  if (const auto* tn = std::get_if<TruncNormalDepth>(&d)) {
    // q_l = m_l / Z, Z the mass of the whole support interval.
    const auto norm = log_interval_grad((support.lo - tn->mu) / tn->sigma,
                                        (support.hi + 1.0 - tn->mu) / tn->sigma, tn->sigma);
    std::vector<std::vector<double>> jac(2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double L = support.lo + static_cast<double>(i);
      const auto cell = log_interval_grad((L - tn->mu) / tn->sigma, (L + 1.0 - tn->mu) / tn->sigma, tn->sigma);
      jac[0][i] = q.probs[i] * (cell[0] - norm[0]);
      jac[1][i] = q.probs[i] * (cell[1] - norm[1]);
    }
    return jac;
  }

  const double rate = std::get<PoissonDepth>(d).rate;
  const double mean = q.mean();
  std::vector<std::vector<double>> jac(1, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double L = support.lo + static_cast<double>(i);
    jac[0][i] = q.probs[i] * (L - mean) / rate;
  }
  return jac;
}

double untruncated_depth_log_pmf(const DepthLaw& d, int L) {
  if (const auto* tn = std::get_if<TruncNormalDepth>(&d)) {
    return trunc_normal_depth_log_pmf(TruncNormalDepth{tn->mu, tn->sigma, 0.0, 1.0}, L);
  }
  const auto& po = std::get<PoissonDepth>(d);
  po.validate();
  return poisson_log_pmf(po.rate, L);
}

double depth_kl(const DepthPMF& q, const DepthLaw& prior) {
  double kl = 0.0;
  for (std::size_t i = 0; i < q.probs.size(); ++i) {
    const double qi = q.probs[i];
    if (qi <= 0.0) continue;
    const int L = q.support.lo + static_cast<int>(i);
    const double log_p = untruncated_depth_log_pmf(prior, L);
    if (!std::isfinite(log_p)) {
      throw DomainError("depth prior assigns zero mass to supported depth " + std::to_string(L));
    }
    kl += qi * (std::log(std::max(qi, kProbFloor)) - log_p);
  }
  return kl;
}

double gaussian_kl(const GaussianPair& g) {
  if (!(g.q_std > 0.0) || !(g.p_std > 0.0)) throw ParameterError("gaussian_kl: stds must be positive");
  const double diff = g.q_mean - g.p_mean;
  const double p_var = g.p_std * g.p_std;
  return std::log(g.p_std / g.q_std) + (g.q_std * g.q_std + diff * diff) / (2.0 * p_var) - 0.5;
}

std::array<double, 2> gaussian_kl_grad(const GaussianPair& g) {
  const double p_var = g.p_std * g.p_std;
  return {(g.q_mean - g.p_mean) / p_var, -1.0 / g.q_std + g.q_std / p_var};
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw DomainError("softplus_inverse: input must be positive");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace depthbnn
