#pragma once

// Error measures (MSE, relative L2, maximum absolute) and the supervised
// full-batch training objective.

#include <cmath>
#include <memory>
#include <utility>

#include "presnet/data.hpp"
#include "presnet/network.hpp"
#include "presnet/optim.hpp"

namespace presnet {

/// Mean squared error (1/n) sum (truth_i - pred_i)^2.
inline double mse(const Vec& pred, const Vec& truth) {
  require(pred.size() == truth.size(), "mse: length mismatch");
  require(!pred.empty(), "mse: empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = truth[i] - pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

/// Relative L2 error ||truth - pred||_2 / ||truth||_2.
inline double rel_l2(const Vec& pred, const Vec& truth) {
  require(pred.size() == truth.size(), "rel_l2: length mismatch");
  require(!pred.empty(), "rel_l2: empty vectors");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = truth[i] - pred[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  require(den > 0.0, "rel_l2: zero truth norm");
  return std::sqrt(num / den);
}

/// Maximum absolute error max_i |truth_i - pred_i|.
inline double max_abs(const Vec& pred, const Vec& truth) {
  require(pred.size() == truth.size(), "max_abs: length mismatch");
  require(!pred.empty(), "max_abs: empty vectors");
  double m = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    m = std::max(m, std::abs(truth[i] - pred[i]));
  return m;
}

/// All three measures over one prediction/truth pair.
struct EvalResult {
  double mse = 0.0;
  double rel_l2 = 0.0;
  double max_abs = 0.0;
  std::size_t n = 0;
};

inline EvalResult evaluate(const Vec& pred, const Vec& truth) {
  EvalResult r;
  r.mse = mse(pred, truth);
  r.rel_l2 = rel_l2(pred, truth);
  r.max_abs = max_abs(pred, truth);
  r.n = pred.size();
  return r;
}

/// Network outputs over every dataset row (scalar-output networks).
inline Vec predict(const ArchitectureSpec& spec, const ParameterSet& params,
                   const Dataset& ds) {
  require(spec.output_dim == 1, "predict: scalar-output networks only");
  require(spec.input_dim == ds.dim(), "predict: dataset dimension mismatch");
  Vec out(ds.n());
  ForwardCache cache;
  Vec input;
  const std::uint64_t h = content_hash(params);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    ds.copy_input(i, input);
    forward_cached(spec, params, input, h, cache);
    out[i] = cache.out[0];
  }
  return out;
}

/// Full-batch mean-squared-error objective over the training set. The
/// returned closure maps flattened parameters to (loss, gradient); the
/// gradient is the per-point backward pass accumulated over the batch and
/// divided by n. Evaluation order is fixed, so results are deterministic.
inline Objective interpolation_objective(const ArchitectureSpec& spec,
                                         const Dataset& train) {
  validate_spec(spec);
  require(spec.output_dim == 1, "objective: scalar-output networks only");
  require(train.n() >= 1, "objective: empty training set");
  require(spec.input_dim == train.dim(),
          "objective: dataset dimension mismatch");

  struct State {
    ArchitectureSpec spec;
    Dataset data;
    ParamLayout layout;
    ParameterSet params;
    ParameterSet grad;
    ForwardCache cache;
    detail::BackwardScratch scratch;
    Vec input;
    Vec upstream{0.0};
  };
  auto st = std::make_shared<State>();
  st->spec = spec;
  st->data = train;
  st->layout = ParamLayout::make(spec);

  return [st](const Vec& theta, Vec& g) {
    require(theta.size() == st->layout.total,
            "objective: parameter vector has wrong length");
    unflatten_into(theta, st->spec, st->params);
    const std::uint64_t h = content_hash(st->params);
    zero_params_into(st->spec, st->grad);
    const double inv_n = 1.0 / static_cast<double>(st->data.n());
    double loss = 0.0;
    for (std::size_t i = 0; i < st->data.n(); ++i) {
      st->data.copy_input(i, st->input);
      forward_cached(st->spec, st->params, st->input, h, st->cache);
      const double r = st->cache.out[0] - st->data.targets[i];
      loss += r * r;
      st->upstream[0] = 2.0 * r * inv_n;
      backward_accumulate(st->spec, st->params, st->cache, h, st->upstream,
                          st->grad, nullptr, st->scratch);
    }
    flatten_into(st->grad, g);
    return loss * inv_n;
  };
}

}  // namespace presnet
