#pragma once

// Discrete depth distributions (quantile-truncated discretized normal and
// truncated Poisson), Gaussian KL and the softplus reparameterization.
// Everything here is a pure function of its arguments.

#include <array>
#include <cstddef>
#include <variant>
#include <vector>

namespace depthbnn {

/// Normal(mu, sigma^2) restricted to [0, inf), discretized over unit cells
/// [L, L+1] and optionally truncated to the [lower_q, upper_q] quantile band
/// of the continuous law. (0, 1) is the untruncated prior form.
struct TruncNormalDepth {
  double mu = 0.0;
  double sigma = 1.0;
  double lower_q = 0.0;
  double upper_q = 1.0;

  void validate() const;
  bool full_support() const { return lower_q == 0.0 && upper_q == 1.0; }
};

/// Poisson(rate) truncated to {0..K}, K the smallest integer whose CDF reaches
/// upper_q. upper_q == 1 means untruncated.
struct PoissonDepth {
  double rate = 1.0;
  double upper_q = 1.0;

  void validate() const;
};

using DepthLaw = std::variant<TruncNormalDepth, PoissonDepth>;

/// Closed integer range [lo, hi].
struct DepthRange {
  int lo = 0;
  int hi = 0;

  int size() const { return hi - lo + 1; }
  bool contains(int L) const { return L >= lo && L <= hi; }
  friend bool operator==(const DepthRange&, const DepthRange&) = default;
};

struct DepthPMF {
  DepthRange support;
  std::vector<double> probs;  // probs[i] is the mass of support.lo + i

  double prob(int L) const;
  double mean() const;
  double variance() const;
  double stddev() const;
};

struct GaussianPair {
  double q_mean = 0.0;
  double q_std = 1.0;
  double p_mean = 0.0;
  double p_std = 1.0;
};

// Standard normal helpers.
double std_normal_pdf(double x);
double std_normal_cdf(double x);
/// ln(1 - Phi(x)), accurate far into the upper tail.
double log_std_normal_sf(double x);
/// ln(Phi(b) - Phi(a)) for a < b; either end may be infinite.
double log_std_normal_interval(double a, double b);

/// CDF of the continuous normal truncated to [0, inf) at x >= 0.
double trunc_normal_cdf(double mu, double sigma, double x);
/// Quantile of the continuous truncated normal, by bisection on the CDF.
double trunc_normal_quantile(double mu, double sigma, double p);

double trunc_normal_depth_pmf(const TruncNormalDepth& d, int L);
double trunc_normal_depth_log_pmf(const TruncNormalDepth& d, int L);
/// d/dmu and d/dsigma of ln p(L), support held fixed. L must lie in the support.
std::array<double, 2> trunc_normal_depth_log_pmf_grad(const TruncNormalDepth& d, int L);

double poisson_log_pmf(double rate, int L);

DepthRange depth_support(const TruncNormalDepth& d);
DepthRange depth_support(const PoissonDepth& d);
DepthRange depth_support(const DepthLaw& d);

DepthPMF depth_pmf(const DepthLaw& d);
/// PMF renormalized over an externally frozen support.
DepthPMF depth_pmf(const DepthLaw& d, DepthRange support);

/// Jacobian of the frozen-support PMF with respect to the natural parameters:
/// rows (mu, sigma) for the normal law, (rate) for Poisson.
std::vector<std::vector<double>> depth_pmf_jacobian(const DepthLaw& d, DepthRange support);

/// ln p(L) of the untruncated law: the discretized half-normal of
/// d.mu/d.sigma, or the plain Poisson; truncation fields are ignored.
double untruncated_depth_log_pmf(const DepthLaw& d, int L);

/// sum_l q(l) ln(q(l) / p(l)) against the untruncated prior.
double depth_kl(const DepthPMF& q, const DepthLaw& prior);

double gaussian_kl(const GaussianPair& g);
/// d KL / d(q_mean, q_std).
std::array<double, 2> gaussian_kl_grad(const GaussianPair& g);

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

inline constexpr double kProbFloor = 1e-300;
/// Tail mass dropped when an untruncated law is enumerated over a finite range.
inline constexpr double kUntruncatedTail = 1e-15;

}  // namespace depthbnn
