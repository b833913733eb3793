#include "depthbnn/vfe.hpp"

#include <algorithm>
#include <cmath>

#include "depthbnn/errors.hpp"

namespace depthbnn {

std::string to_string(DepthKind kind) { return kind == DepthKind::trunc_normal ? "trunc_normal" : "poisson"; }

DepthKind parse_depth_kind(std::string_view text) {
  if (text == "trunc_normal" || text == "normal") return DepthKind::trunc_normal;
  if (text == "poisson") return DepthKind::poisson;
  throw ParameterError("unknown depth distribution kind: " + std::string(text));
}

DepthLaw DepthPosterior::law(const ParameterStore& store) const {
  if (kind == DepthKind::trunc_normal) {
    return TruncNormalDepth{store[offset], softplus(store[offset + 1]), lower_q, upper_q};
  }
  return PoissonDepth{softplus(store[offset]), upper_q};
}

VariationalModel make_model(const DepthInit& init, const NetworkShape& shape, double depth_lr, RandomTape& tape) {
  ParameterStore store;
  const std::size_t depth_group = store.add_group("depth", depth_lr);
  const std::size_t weight_group = store.add_group("weights");

  DepthPosterior depth{init.kind, 0, init.lower_q, init.upper_q};
  if (init.kind == DepthKind::trunc_normal) {
    TruncNormalDepth{init.loc, init.scale, init.lower_q, init.upper_q}.validate();
    depth.offset = store.allocate(depth_group, 2);
    store[depth.offset] = init.loc;
    store[depth.offset + 1] = softplus_inverse(init.scale);
  } else {
    depth.lower_q = 0.0;
    PoissonDepth{init.loc, init.upper_q}.validate();
    depth.offset = store.allocate(depth_group, 1);
    store[depth.offset] = softplus_inverse(init.loc);
  }
  UnboundedNetwork net(shape, store, weight_group, tape);
  return VariationalModel{std::move(store), depth, std::move(net)};
}

VFEBreakdown compute_vfe(const UnboundedNetwork& net, const ParameterStore& store, const DepthPMF& q,
                         const DepthLaw& prior, const Matrix& x, std::span<const int> y, std::size_t dataset_size,
                         RandomTape& tape, const VfeOptions& options, std::span<double> grad,
                         std::vector<double>* dq) {
  const DepthRange support = q.support;
  if (support.hi > options.support_cap) {
    throw RunawayDepth("depth support reaches " + std::to_string(support.hi) + ", above the cap of " +
                       std::to_string(options.support_cap));
  }
  if (support.hi > net.max_depth()) throw ContractViolation("compute_vfe: ensure_depth was not applied");
  if (options.include_likelihood && (y.empty() || static_cast<Eigen::Index>(y.size()) != x.rows())) {
    throw ContractViolation("compute_vfe: batch must be non-empty with one label per row");
  }
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != store.size()) throw ContractViolation("compute_vfe: gradient size mismatch");

  const auto n_support = static_cast<std::size_t>(support.size());
  VFEBreakdown out;
  out.support_used = support;
  out.per_depth_nll.assign(n_support, 0.0);
  out.per_depth_kl.assign(n_support, 0.0);

  // Likelihood: one shared trace, heads evaluated only on the support.
  ForwardTrace trace;
  const double scale = options.include_likelihood ? static_cast<double>(dataset_size) / static_cast<double>(y.size()) : 0.0;
  if (options.include_likelihood) {
    trace = forward_local_reparam(net, store, x, support, tape);
    for (std::size_t i = 0; i < n_support; ++i) {
      const Matrix& logits = trace.logits_per_depth[static_cast<std::size_t>(support.lo) + i];
      double nll = 0.0;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        nll -= categorical_loglik(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())),
                                  y[static_cast<std::size_t>(r)]);
      }
      out.per_depth_nll[i] = scale * nll;
    }
  }

  // Parameter KL per depth: head g_l plus the shared prefix f_0..f_l.
  const auto& prior_w = net.shape().prior;
  std::vector<double> feature_kl(static_cast<std::size_t>(support.hi + 1));
  for (int l = 0; l <= support.hi; ++l) {
    feature_kl[static_cast<std::size_t>(l)] = layer_kl(store, net.feature_layer(l), prior_w);
  }
  double prefix = 0.0;
  for (int l = 0; l <= support.hi; ++l) {
    prefix += feature_kl[static_cast<std::size_t>(l)];
    if (support.contains(l)) {
      const auto i = static_cast<std::size_t>(l - support.lo);
      out.per_depth_kl[i] = prefix + layer_kl(store, net.output_heads()[static_cast<std::size_t>(l)], prior_w);
    }
  }

  out.depth_kl = depth_kl(q, prior);
  for (std::size_t i = 0; i < n_support; ++i) {
    out.expected_param_kl += q.probs[i] * out.per_depth_kl[i];
    out.expected_nll += q.probs[i] * out.per_depth_nll[i];
  }
  out.total = out.depth_kl + out.expected_param_kl + out.expected_nll;

  if (dq) {
    dq->assign(n_support, 0.0);
    for (std::size_t i = 0; i < n_support; ++i) {
      const int L = support.lo + static_cast<int>(i);
      (*dq)[i] = std::log(std::max(q.probs[i], kProbFloor)) + 1.0 - untruncated_depth_log_pmf(prior, L) +
                 out.per_depth_kl[i] + out.per_depth_nll[i];
    }
  }

  if (want_grad) {
    if (options.include_likelihood) {
      std::vector<Matrix> dlogits(static_cast<std::size_t>(support.hi + 1));
      for (std::size_t i = 0; i < n_support; ++i) {
        const auto l = static_cast<std::size_t>(support.lo) + i;
        const Matrix& logits = trace.logits_per_depth[l];
        Matrix& d = dlogits[l];
        d.resize(logits.rows(), logits.cols());
        const double w = q.probs[i] * scale;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
          const auto p = softmax(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
          for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            const double onehot = c == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
            d(r, c) = w * (p[static_cast<std::size_t>(c)] - onehot);
          }
        }
      }
      backward(net, store, trace, dlogits, grad);
    }
    // f_k is used by every depth l >= k in the support.
    double tail = 0.0;
    for (int l = support.hi; l >= 0; --l) {
      if (support.contains(l)) {
        const double ql = q.probs[static_cast<std::size_t>(l - support.lo)];
        tail += ql;
        layer_kl_grad(store, net.output_heads()[static_cast<std::size_t>(l)], prior_w, ql, grad);
      }
      layer_kl_grad(store, net.feature_layer(l), prior_w, tail, grad);
    }
  }
  return out;
}

VFEBreakdown compute_vfe(const VariationalModel& model, const DepthLaw& prior, const Matrix& x,
                         std::span<const int> y, std::size_t dataset_size, RandomTape& tape, DepthRange support,
                         const VfeOptions& options, std::span<double> grad) {
  const DepthLaw law = model.depth.law(model.store);
  const DepthPMF q = depth_pmf(law, support);
  std::vector<double> dq;
  const bool want_grad = !grad.empty();
  VFEBreakdown out = compute_vfe(model.net, model.store, q, prior, x, y, dataset_size, tape, options, grad,
                                 want_grad ? &dq : nullptr);
  if (want_grad) {
    const auto jac = depth_pmf_jacobian(law, support);
    const std::size_t off = model.depth.offset;
    std::vector<double> natural(jac.size(), 0.0);
    for (std::size_t j = 0; j < jac.size(); ++j) {
      for (std::size_t i = 0; i < dq.size(); ++i) natural[j] += dq[i] * jac[j][i];
    }
    if (model.depth.kind == DepthKind::trunc_normal) {
      grad[off] += natural[0];
      grad[off + 1] += natural[1] * sigmoid(model.store[off + 1]);
    } else {
      grad[off] += natural[0] * sigmoid(model.store[off]);
    }
  }
  return out;
}

VFEBreakdown compute_vfe(const VariationalModel& model, const DepthLaw& prior, const Matrix& x,
                         std::span<const int> y, std::size_t dataset_size, RandomTape& tape,
                         const VfeOptions& options, std::span<double> grad) {
  return compute_vfe(model, prior, x, y, dataset_size, tape, depth_support(model.depth.law(model.store)), options,
                     grad);
}

Matrix predict(const UnboundedNetwork& net, const ParameterStore& store, const DepthPMF& q, const Matrix& x,
               int samples, RandomTape& tape) {
  if (samples < 1) throw ParameterError("predict: need at least one sample");
  const int classes = net.shape().num_classes;
  Matrix probs = Matrix::Zero(x.rows(), classes);
  for (int s = 0; s < samples; ++s) {
    const ForwardTrace trace = forward_local_reparam(net, store, x, q.support, tape);
    for (int l = q.support.lo; l <= q.support.hi; ++l) {
      const double w = q.prob(l);
      const Matrix& logits = trace.logits_per_depth[static_cast<std::size_t>(l)];
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto p = softmax(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(classes)));
        for (int c = 0; c < classes; ++c) probs(r, c) += w * p[static_cast<std::size_t>(c)];
      }
    }
  }
  probs /= static_cast<double>(samples);
  // Renormalize away the rounding in the mixture weights.
  for (Eigen::Index r = 0; r < probs.rows(); ++r) probs.row(r) /= probs.row(r).sum();
  return probs;
}

Matrix predict(const VariationalModel& model, const Matrix& x, int samples, RandomTape& tape) {
  return predict(model.net, model.store, depth_pmf(model.depth.law(model.store)), x, samples, tape);
}

double accuracy_of(const Matrix& probs, std::span<const int> y) {
  if (y.empty()) throw ContractViolation("accuracy: empty dataset");
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(r, c) > probs(r, best)) best = c;
    }
    if (best == y[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double evaluate_accuracy(const VariationalModel& model, const Matrix& x, std::span<const int> y, int samples,
                         RandomTape& tape) {
  return accuracy_of(predict(model, x, samples, tape), y);
}

}  // namespace depthbnn
