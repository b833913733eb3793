#pragma once

// Unbounded-depth Bayesian MLP: shared input/hidden layers f_0..f_L, one
// linear output head g_l per depth, grown lazily. Parameters live in a
// ParameterStore; layers only hold offsets into it.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "depthbnn/dist.hpp"
#include "depthbnn/optim.hpp"
#include "depthbnn/tape.hpp"

namespace depthbnn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct WeightPrior {
  double mean = 0.0;
  double std = 1.0;
};

/// Offsets of one mean-field Gaussian affine layer. Weights are out x in,
/// row-major; each block is a contiguous run in the store.
struct BayesianLinear {
  int in_dim = 0;
  int out_dim = 0;
  std::size_t w_mean = 0;
  std::size_t w_rho = 0;
  std::size_t b_mean = 0;
  std::size_t b_rho = 0;

  std::size_t weight_count() const { return static_cast<std::size_t>(in_dim) * out_dim; }
  std::size_t param_count() const { return 2 * (weight_count() + static_cast<std::size_t>(out_dim)); }
};

struct NetworkShape {
  int input_dim = 2;
  int hidden_width = 32;
  int num_classes = 2;
  double leaky_alpha = 0.1;
  WeightPrior prior{};
  double init_std = 0.05;
};

class UnboundedNetwork {
 public:
  /// Allocates f_0 and g_0 into `store` (group `group`), drawing initial
  /// means from `tape`.
  UnboundedNetwork(NetworkShape shape, ParameterStore& store, std::size_t group, RandomTape& tape);

  /// Grows to at least L hidden layers and L+1 heads. Never shrinks.
  void ensure_depth(ParameterStore& store, int L, RandomTape& tape);

  const NetworkShape& shape() const { return shape_; }
  const BayesianLinear& input_layer() const { return input_; }
  /// f_l for l >= 1 (index l - 1).
  const std::vector<BayesianLinear>& hidden_layers() const { return hidden_; }
  const std::vector<BayesianLinear>& output_heads() const { return heads_; }
  /// f_l for l >= 0.
  const BayesianLinear& feature_layer(int l) const { return l == 0 ? input_ : hidden_.at(l - 1); }
  int max_depth() const { return static_cast<int>(hidden_.size()); }

  VariationalWeight weight(const ParameterStore& store, const BayesianLinear& layer, int row, int col) const;
  VariationalWeight bias(const ParameterStore& store, const BayesianLinear& layer, int row) const;

  /// Rebuilds the layer table for a store that was populated in the standard
  /// allocation order up to `depth` (used when restoring checkpoints).
  static UnboundedNetwork restore(NetworkShape shape, std::size_t group, std::size_t first_offset, int depth);

 private:
  UnboundedNetwork() = default;
  BayesianLinear add_layer(ParameterStore& store, int in_dim, int out_dim, RandomTape& tape);

  NetworkShape shape_;
  std::size_t group_ = 0;
  BayesianLinear input_;
  std::vector<BayesianLinear> hidden_;
  std::vector<BayesianLinear> heads_;
};

/// Cached values of one sampled affine layer, needed by the backward pass.
struct LayerCache {
  Matrix input;
  Matrix eps;
  Matrix stddev;
  Matrix pre;  // sampled pre-activation
};

struct ForwardTrace {
  DepthRange heads;                   // depths whose head was evaluated
  std::vector<Matrix> hidden_activations;  // h_0..h_max
  std::vector<Matrix> logits_per_depth;    // indexed by depth; empty outside `heads`
  std::vector<LayerCache> feature_cache;   // f_0..f_max
  std::vector<LayerCache> head_cache;      // indexed by depth
};

Matrix leaky_relu(const Matrix& x, double alpha);
double leaky_relu(double x, double alpha);

/// Local reparameterization forward pass. Noise is drawn in the order
/// f_0, g_0, f_1, g_1, ..., one standard normal per pre-activation unit,
/// row-major within a layer; heads outside `heads` draw nothing. Hence the
/// hidden activations for a smaller depth are a bitwise prefix of those for
/// a larger one under the same tape.
ForwardTrace forward_local_reparam(const UnboundedNetwork& net, const ParameterStore& store,
                                   const Matrix& x, DepthRange heads, RandomTape& tape);
ForwardTrace forward_local_reparam(const UnboundedNetwork& net, const ParameterStore& store,
                                   const Matrix& x, int max_depth, RandomTape& tape);

/// Accumulates d(objective)/d(raw params) into `grad` given d/d(logits) for
/// each evaluated head (`dlogits[l]`, same shape as the trace's logits).
void backward(const UnboundedNetwork& net, const ParameterStore& store, const ForwardTrace& trace,
              const std::vector<Matrix>& dlogits, std::span<double> grad);

double categorical_loglik(std::span<const double> logits, int y);
std::vector<double> softmax(std::span<const double> logits);

/// Sum of gaussian_kl over one layer's weights and biases.
double layer_kl(const ParameterStore& store, const BayesianLinear& layer, const WeightPrior& prior);
/// Adds scale * d(layer_kl)/d(raw params) into `grad`.
void layer_kl_grad(const ParameterStore& store, const BayesianLinear& layer, const WeightPrior& prior,
                   double scale, std::span<double> grad);

/// KL of head g_L plus f_0..f_L.
double network_kl(const UnboundedNetwork& net, const ParameterStore& store, int L);

}  // namespace depthbnn
