#pragma once

// Variational free energy over the finite depth support, and the
// posterior-averaged predictive.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "depthbnn/dist.hpp"
#include "depthbnn/net.hpp"
#include "depthbnn/optim.hpp"
#include "depthbnn/tape.hpp"

namespace depthbnn {

enum class DepthKind { trunc_normal, poisson };

std::string to_string(DepthKind kind);
DepthKind parse_depth_kind(std::string_view text);

/// Variational depth law whose free parameters live in a ParameterStore.
/// trunc_normal stores (mu, softplus^-1(sigma)); poisson stores softplus^-1(rate).
/// The quantile band is fixed.
struct DepthPosterior {
  DepthKind kind = DepthKind::trunc_normal;
  std::size_t offset = 0;
  double lower_q = 0.0;
  double upper_q = 1.0;

  std::size_t param_count() const { return kind == DepthKind::trunc_normal ? 2 : 1; }
  DepthLaw law(const ParameterStore& store) const;
};

/// Everything the optimizer touches: depth parameters first (group "depth"),
/// then network parameters (group "weights").
struct VariationalModel {
  ParameterStore store;
  DepthPosterior depth;
  UnboundedNetwork net;
};

struct DepthInit {
  DepthKind kind = DepthKind::trunc_normal;
  double loc = 0.0;    // mu (trunc_normal) or rate (poisson)
  double scale = 1.8;  // sigma; unused for poisson
  double lower_q = 0.025;
  double upper_q = 0.975;
};

VariationalModel make_model(const DepthInit& init, const NetworkShape& shape, double depth_lr, RandomTape& tape);

struct VfeOptions {
  bool include_likelihood = true;
  int support_cap = 64;
};

struct VFEBreakdown {
  double depth_kl = 0.0;
  double expected_param_kl = 0.0;
  double expected_nll = 0.0;
  double total = 0.0;
  DepthRange support_used;
  std::vector<double> per_depth_nll;  // scaled by N / |batch|, aligned with support_used
  std::vector<double> per_depth_kl;   // network_kl(l), aligned with support_used
};

/// Free energy for an explicit depth pmf q. If `grad` is non-empty it
/// receives d total / d(raw network params) (added into). If `dq` is given it
/// receives d total / d q(l) for l in q's support.
VFEBreakdown compute_vfe(const UnboundedNetwork& net, const ParameterStore& store, const DepthPMF& q,
                         const DepthLaw& prior, const Matrix& x, std::span<const int> y, std::size_t dataset_size,
                         RandomTape& tape, const VfeOptions& options = {}, std::span<double> grad = {},
                         std::vector<double>* dq = nullptr);

/// Free energy of a model with its depth support frozen to `support`.
/// Gradient (if requested) covers every slot of model.store, depth
/// parameters included.
VFEBreakdown compute_vfe(const VariationalModel& model, const DepthLaw& prior, const Matrix& x,
                         std::span<const int> y, std::size_t dataset_size, RandomTape& tape, DepthRange support,
                         const VfeOptions& options = {}, std::span<double> grad = {});
/// Same, with the support derived from the model's current depth law.
VFEBreakdown compute_vfe(const VariationalModel& model, const DepthLaw& prior, const Matrix& x,
                         std::span<const int> y, std::size_t dataset_size, RandomTape& tape,
                         const VfeOptions& options = {}, std::span<double> grad = {});

/// Monte Carlo estimate of the posterior predictive with `samples` weight
/// draws, mixing heads by q. Rows sum to 1.
Matrix predict(const UnboundedNetwork& net, const ParameterStore& store, const DepthPMF& q, const Matrix& x,
               int samples, RandomTape& tape);
Matrix predict(const VariationalModel& model, const Matrix& x, int samples, RandomTape& tape);

/// Fraction of rows whose arg-max class equals the label (ties go to the lower index).
double accuracy_of(const Matrix& probs, std::span<const int> y);
double evaluate_accuracy(const VariationalModel& model, const Matrix& x, std::span<const int> y, int samples,
                         RandomTape& tape);

}  // namespace depthbnn
