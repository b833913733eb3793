#include "depthbnn/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthbnn/errors.hpp"

namespace depthbnn {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;

struct LayerMoments {
  Matrix w_mean;
  Matrix w_var;
  Vector b_mean;
  Vector b_var;
};

LayerMoments layer_moments(const ParameterStore& store, const BayesianLinear& layer) {
  const double* p = store.values().data();
  LayerMoments m;
  m.w_mean = ConstMap(p + layer.w_mean, layer.out_dim, layer.in_dim);
  m.w_var = ConstMap(p + layer.w_rho, layer.out_dim, layer.in_dim).unaryExpr([](double r) {
    const double s = softplus(r);
    return s * s;
  });
  m.b_mean = ConstVecMap(p + layer.b_mean, layer.out_dim);
  m.b_var = ConstVecMap(p + layer.b_rho, layer.out_dim).unaryExpr([](double r) {
    const double s = softplus(r);
    return s * s;
  });
  return m;
}

LayerCache sample_layer(const ParameterStore& store, const BayesianLinear& layer, const Matrix& input,
                        RandomTape& tape) {
  const LayerMoments m = layer_moments(store, layer);
  const Eigen::Index batch = input.rows();

  Matrix mean = input * m.w_mean.transpose();
  mean.rowwise() += m.b_mean.transpose();
  Matrix var = input.array().square().matrix() * m.w_var.transpose();
  var.rowwise() += m.b_var.transpose();

  LayerCache cache;
  cache.input = input;
  cache.eps.resize(batch, layer.out_dim);
  for (Eigen::Index r = 0; r < batch; ++r) {
    for (Eigen::Index c = 0; c < layer.out_dim; ++c) cache.eps(r, c) = tape.normal();
  }
  cache.stddev = var.array().sqrt().matrix();
  cache.pre = mean + cache.stddev.cwiseProduct(cache.eps);
  return cache;
}

// Back-propagates d/d(pre) through one sampled layer. Returns d/d(input).
Matrix layer_backward(const ParameterStore& store, const BayesianLinear& layer, const LayerCache& cache,
                      const Matrix& d_pre, std::span<double> grad) {
  const double* p = store.values().data();
  const ConstMap w_mean(p + layer.w_mean, layer.out_dim, layer.in_dim);
  const ConstMap w_rho(p + layer.w_rho, layer.out_dim, layer.in_dim);
  const ConstVecMap b_rho(p + layer.b_rho, layer.out_dim);

  // pre = mean + sqrt(var) * eps, so d/d(var) = d_pre * eps / (2 sqrt(var)).
  const Matrix d_var = (d_pre.array() * cache.eps.array() / (2.0 * cache.stddev.array())).matrix();
  const Matrix input_sq = cache.input.array().square().matrix();

  Eigen::Map<Matrix> g_w_mean(grad.data() + layer.w_mean, layer.out_dim, layer.in_dim);
  Eigen::Map<Matrix> g_w_rho(grad.data() + layer.w_rho, layer.out_dim, layer.in_dim);
  Eigen::Map<Vector> g_b_mean(grad.data() + layer.b_mean, layer.out_dim);
  Eigen::Map<Vector> g_b_rho(grad.data() + layer.b_rho, layer.out_dim);

  g_w_mean.noalias() += d_pre.transpose() * cache.input;
  g_b_mean += d_pre.colwise().sum().transpose();

  const Matrix d_w_var = d_var.transpose() * input_sq;
  const Vector d_b_var = d_var.colwise().sum().transpose();
  // var = softplus(rho)^2: d var / d rho = 2 softplus(rho) sigmoid(rho).
  for (Eigen::Index r = 0; r < layer.out_dim; ++r) {
    for (Eigen::Index c = 0; c < layer.in_dim; ++c) {
      const double rho = w_rho(r, c);
      g_w_rho(r, c) += d_w_var(r, c) * 2.0 * softplus(rho) * sigmoid(rho);
    }
    const double rho = b_rho(r);
    g_b_rho(r) += d_b_var(r) * 2.0 * softplus(rho) * sigmoid(rho);
  }

  const Matrix w_var = w_rho.unaryExpr([](double r) {
    const double s = softplus(r);
    return s * s;
  });
  Matrix d_input = d_pre * w_mean;
  d_input.array() += 2.0 * cache.input.array() * (d_var * w_var).array();
  return d_input;
}

void check_store_span(const ParameterStore& store, std::span<double> grad) {
  if (grad.size() != store.size()) throw ContractViolation("gradient buffer does not match the parameter store");
}

}  // namespace

UnboundedNetwork::UnboundedNetwork(NetworkShape shape, ParameterStore& store, std::size_t group,
                                   RandomTape& tape)
    : shape_(shape), group_(group) {
  if (shape_.input_dim <= 0 || shape_.hidden_width <= 0 || shape_.num_classes <= 0) {
    throw ParameterError("network dimensions must be positive");
  }
  if (!(shape_.prior.std > 0.0) || !(shape_.init_std > 0.0)) throw ParameterError("stds must be positive");
  input_ = add_layer(store, shape_.input_dim, shape_.hidden_width, tape);
  heads_.push_back(add_layer(store, shape_.hidden_width, shape_.num_classes, tape));
}

BayesianLinear UnboundedNetwork::add_layer(ParameterStore& store, int in_dim, int out_dim, RandomTape& tape) {
  BayesianLinear layer{in_dim, out_dim};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double rho0 = softplus_inverse(shape_.init_std);

  layer.w_mean = store.allocate(group_, layer.weight_count());
  layer.w_rho = store.allocate(group_, layer.weight_count(), rho0);
  layer.b_mean = store.allocate(group_, static_cast<std::size_t>(out_dim));
  layer.b_rho = store.allocate(group_, static_cast<std::size_t>(out_dim), rho0);
  for (std::size_t i = 0; i < layer.weight_count(); ++i) store[layer.w_mean + i] = tape.uniform(-bound, bound);
  for (int i = 0; i < out_dim; ++i) store[layer.b_mean + static_cast<std::size_t>(i)] = tape.uniform(-bound, bound);
  return layer;
}

void UnboundedNetwork::ensure_depth(ParameterStore& store, int L, RandomTape& tape) {
  if (L < 0) throw ParameterError("ensure_depth: depth must be non-negative");
  while (max_depth() < L) {
    hidden_.push_back(add_layer(store, shape_.hidden_width, shape_.hidden_width, tape));
    heads_.push_back(add_layer(store, shape_.hidden_width, shape_.num_classes, tape));
  }
}

UnboundedNetwork UnboundedNetwork::restore(NetworkShape shape, std::size_t group, std::size_t first_offset,
                                           int depth) {
  UnboundedNetwork net;
  net.shape_ = shape;
  net.group_ = group;
  std::size_t offset = first_offset;
  auto place = [&offset](int in_dim, int out_dim) {
    BayesianLinear layer{in_dim, out_dim};
    layer.w_mean = offset;
    layer.w_rho = layer.w_mean + layer.weight_count();
    layer.b_mean = layer.w_rho + layer.weight_count();
    layer.b_rho = layer.b_mean + static_cast<std::size_t>(out_dim);
    offset += layer.param_count();
    return layer;
  };
  net.input_ = place(shape.input_dim, shape.hidden_width);
  net.heads_.push_back(place(shape.hidden_width, shape.num_classes));
  for (int l = 1; l <= depth; ++l) {
    net.hidden_.push_back(place(shape.hidden_width, shape.hidden_width));
    net.heads_.push_back(place(shape.hidden_width, shape.num_classes));
  }
  return net;
}

VariationalWeight UnboundedNetwork::weight(const ParameterStore& store, const BayesianLinear& layer, int row,
                                           int col) const {
  const auto idx = static_cast<std::size_t>(row) * layer.in_dim + col;
  return {store[layer.w_mean + idx], store[layer.w_rho + idx], shape_.prior.mean, shape_.prior.std};
}

VariationalWeight UnboundedNetwork::bias(const ParameterStore& store, const BayesianLinear& layer, int row) const {
  const auto idx = static_cast<std::size_t>(row);
  return {store[layer.b_mean + idx], store[layer.b_rho + idx], shape_.prior.mean, shape_.prior.std};
}

double leaky_relu(double x, double alpha) { return std::max(alpha * x, x); }

Matrix leaky_relu(const Matrix& x, double alpha) {
  return x.unaryExpr([alpha](double v) { return leaky_relu(v, alpha); });
}

ForwardTrace forward_local_reparam(const UnboundedNetwork& net, const ParameterStore& store, const Matrix& x,
                                   int max_depth, RandomTape& tape) {
  return forward_local_reparam(net, store, x, DepthRange{0, max_depth}, tape);
}

ForwardTrace forward_local_reparam(const UnboundedNetwork& net, const ParameterStore& store, const Matrix& x,
                                   DepthRange heads, RandomTape& tape) {
  if (heads.lo < 0 || heads.hi < heads.lo) throw ContractViolation("forward: invalid head range");
  if (heads.hi > net.max_depth()) {
    throw ContractViolation("forward: depth " + std::to_string(heads.hi) + " exceeds instantiated depth " +
                            std::to_string(net.max_depth()));
  }
  if (x.cols() != net.shape().input_dim) throw ContractViolation("forward: input dimension mismatch");

  const double alpha = net.shape().leaky_alpha;
  ForwardTrace trace;
  trace.heads = heads;
  const auto depth_count = static_cast<std::size_t>(heads.hi + 1);
  trace.hidden_activations.reserve(depth_count);
  trace.feature_cache.reserve(depth_count);
  trace.logits_per_depth.resize(depth_count);
  trace.head_cache.resize(depth_count);

  for (int l = 0; l <= heads.hi; ++l) {
    const Matrix& input = l == 0 ? x : trace.hidden_activations.back();
    trace.feature_cache.push_back(sample_layer(store, net.feature_layer(l), input, tape));
    trace.hidden_activations.push_back(leaky_relu(trace.feature_cache.back().pre, alpha));
    if (heads.contains(l)) {
      const auto idx = static_cast<std::size_t>(l);
      trace.head_cache[idx] = sample_layer(store, net.output_heads()[idx], trace.hidden_activations.back(), tape);
      trace.logits_per_depth[idx] = trace.head_cache[idx].pre;
    }
  }
  return trace;
}

void backward(const UnboundedNetwork& net, const ParameterStore& store, const ForwardTrace& trace,
              const std::vector<Matrix>& dlogits, std::span<double> grad) {
  check_store_span(store, grad);
  const double alpha = net.shape().leaky_alpha;
  const int top = trace.heads.hi;
  Matrix d_hidden;  // d/d h_l, accumulated from deeper layers and head l

  for (int l = top; l >= 0; --l) {
    const auto idx = static_cast<std::size_t>(l);
    if (trace.heads.contains(l) && idx < dlogits.size() && dlogits[idx].size() > 0) {
      Matrix from_head = layer_backward(store, net.output_heads()[idx], trace.head_cache[idx], dlogits[idx], grad);
      if (d_hidden.size() == 0) {
        d_hidden = std::move(from_head);
      } else {
        d_hidden += from_head;
      }
    }
    if (d_hidden.size() == 0) continue;
    const LayerCache& cache = trace.feature_cache[idx];
    const Matrix d_pre =
        d_hidden.binaryExpr(cache.pre, [alpha](double g, double z) { return z > 0.0 ? g : alpha * g; });
    d_hidden = layer_backward(store, net.feature_layer(l), cache, d_pre, grad);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double categorical_loglik(std::span<const double> logits, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) throw DomainError("class index out of range");
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - top);
  return logits[static_cast<std::size_t>(y)] - top - std::log(total);
}

double layer_kl(const ParameterStore& store, const BayesianLinear& layer, const WeightPrior& prior) {
  double kl = 0.0;
  auto add = [&](std::size_t mean_off, std::size_t rho_off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      kl += gaussian_kl({store[mean_off + i], softplus(store[rho_off + i]), prior.mean, prior.std});
    }
  };
  add(layer.w_mean, layer.w_rho, layer.weight_count());
  add(layer.b_mean, layer.b_rho, static_cast<std::size_t>(layer.out_dim));
  return kl;
}

void layer_kl_grad(const ParameterStore& store, const BayesianLinear& layer, const WeightPrior& prior, double scale,
                   std::span<double> grad) {
  check_store_span(store, grad);
  if (scale == 0.0) return;
  auto add = [&](std::size_t mean_off, std::size_t rho_off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double rho = store[rho_off + i];
      const auto g = gaussian_kl_grad({store[mean_off + i], softplus(rho), prior.mean, prior.std});
      grad[mean_off + i] += scale * g[0];
      grad[rho_off + i] += scale * g[1] * sigmoid(rho);
    }
  };
  add(layer.w_mean, layer.w_rho, layer.weight_count());
  add(layer.b_mean, layer.b_rho, static_cast<std::size_t>(layer.out_dim));
}

double network_kl(const UnboundedNetwork& net, const ParameterStore& store, int L) {
  if (L < 0 || L > net.max_depth()) throw ContractViolation("network_kl: depth not instantiated");
  const auto& prior = net.shape().prior;
  double kl = layer_kl(store, net.output_heads()[static_cast<std::size_t>(L)], prior);
  for (int l = 0; l <= L; ++l) kl += layer_kl(store, net.feature_layer(l), prior);
  return kl;
}

}  // namespace depthbnn
