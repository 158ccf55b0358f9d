#include "splicemix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "splicemix/errors.hpp"

namespace splicemix::model {
namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

// Soft-target binary cross entropy for one class.
double bce_term(double target, double prob) {
  const double p = clamp_prob(prob);
  return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw DivergenceError(std::string("non-finite ") + what);
}

// Adds delta ⊗ pooled into the gradient.
void accumulate(HeadGradient& grad, std::span<const double> delta, std::span<const double> pooled) {
  const std::size_t dim = pooled.size();
  for (std::size_t c = 0; c < delta.size(); ++c) {
    double* row = &grad.weights[c * dim];
    for (std::size_t d = 0; d < dim; ++d) row[d] += delta[c] * pooled[d];
    grad.bias[c] += delta[c];
  }
}

}  // namespace

LinearHead::LinearHead(std::size_t num_classes, std::size_t feature_dim)
    : classes(num_classes),
      dim(feature_dim),
      weights(num_classes * feature_dim, 0.0),
      bias(num_classes, 0.0) {}

void LinearHead::validate() const {
  if (weights.size() != classes * dim || bias.size() != classes) {
    throw DimensionError("linear head storage does not match " + std::to_string(classes) + "x" +
                         std::to_string(dim));
  }
  for (double w : weights) check_finite(w, "head weight");
  for (double b : bias) check_finite(b, "head bias");
}

PredictionSet PredictionSet::detached() const {
  PredictionSet copy = *this;
  copy.stop_grad = true;
  return copy;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> global_max_pool(const ImageTensor& features) {
  std::vector<double> pooled(features.channels());
  for (std::size_t c = 0; c < features.channels(); ++c) {
    const auto plane = features.plane(c);
    pooled[c] = *std::max_element(plane.begin(), plane.end());
  }
  return pooled;
}

Prediction predict_pooled(const LinearHead& head, std::span<const double> pooled) {
  if (pooled.size() != head.dim) {
    throw DimensionError("pooled feature has " + std::to_string(pooled.size()) +
                         " channels, head expects " + std::to_string(head.dim));
  }
  Prediction p;
  p.logits.resize(head.classes);
  p.probs.resize(head.classes);
  for (std::size_t c = 0; c < head.classes; ++c) {
    double z = head.bias[c];
    const double* row = &head.weights[c * head.dim];
    for (std::size_t d = 0; d < head.dim; ++d) z += row[d] * pooled[d];
    p.logits[c] = z;
    p.probs[c] = sigmoid(z);
  }
  return p;
}

Prediction predict(const LinearHead& head, const ImageTensor& features) {
  const auto pooled = global_max_pool(features);
  return predict_pooled(head, pooled);
}

PredictionSet predict_all(const LinearHead& head, std::span<const ImageTensor> features,
                          bool stop_grad) {
  PredictionSet set;
  set.stop_grad = stop_grad;
  set.rows.reserve(features.size());
  for (const auto& f : features) set.rows.push_back(predict(head, f));
  return set;
}

std::vector<double> bce_loss(const PredictionSet& preds, std::span<const MultiHotLabel> labels) {
  if (preds.size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (preds.rows.empty()) return {};
  const std::size_t classes = preds.rows.front().probs.size();
  std::vector<double> loss(classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& probs = preds.rows[i].probs;
    if (probs.size() != classes || labels[i].num_classes() != classes) {
      throw DimensionError("bce_loss: class count mismatch at sample " + std::to_string(i));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      loss[c] += bce_term(labels[i].test(c) ? 1.0 : 0.0, probs[c]);
    }
  }
  return loss;
}

std::vector<ImageTensor> split_features(const ImageTensor& features, const GridSpec& grid) {
  grid.validate();
  auto cells = grid_split(features, grid.geom);
  std::vector<ImageTensor> live;
  live.reserve(grid.live_cells());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!grid.is_dropped(k)) live.push_back(std::move(cells[k]));
  }
  return live;
}

ImageTensor recover_features(std::span<const ImageTensor> live_cells, const GridSpec& grid,
                             float fill) {
  grid.validate();
  if (live_cells.size() != grid.live_cells()) {
    throw DimensionError("recover_features: " + std::to_string(live_cells.size()) +
                         " sub-maps for " + std::to_string(grid.live_cells()) + " live cells");
  }
  std::vector<std::optional<ImageTensor>> cells(grid.geom.cells());
  std::size_t next = 0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!grid.is_dropped(k)) cells[k] = live_cells[next++];
  }
  return grid_compose(cells, grid.geom, fill);
}

std::vector<double> cl_loss(const PredictionSet& regular_targets, const PredictionSet& sub_preds,
                            const BatchPlan& plan) {
  if (!regular_targets.stop_grad) {
    throw DimensionError("cl_loss: regular targets must be a stop-grad copy");
  }
  if (sub_preds.size() != plan.total_members()) {
    throw DimensionError("cl_loss: " + std::to_string(sub_preds.size()) +
                         " sub-image predictions for " + std::to_string(plan.total_members()) +
                         " plan members");
  }
  if (regular_targets.size() != plan.batch_size) {
    throw DimensionError("cl_loss: " + std::to_string(regular_targets.size()) +
                         " regular predictions for a batch of " + std::to_string(plan.batch_size));
  }
  if (sub_preds.rows.empty()) {
    return regular_targets.rows.empty()
               ? std::vector<double>{}
               : std::vector<double>(regular_targets.rows.front().probs.size(), 0.0);
  }
  const std::size_t classes = sub_preds.rows.front().probs.size();
  std::vector<double> loss(classes, 0.0);
  std::size_t s = 0;
  for (const auto& m : plan.mixed) {
    for (auto j : m.members) {
      const auto& target = regular_targets.rows[j].probs;
      const auto& sub = sub_preds.rows[s++].probs;
      if (target.size() != classes || sub.size() != classes) {
        throw DimensionError("cl_loss: class count mismatch for member " + std::to_string(j));
      }
      for (std::size_t c = 0; c < classes; ++c) loss[c] += bce_term(target[c], sub[c]);
    }
  }
  return loss;
}

LossBreakdown total_loss(std::span<const double> bce, std::span<const double> cl) {
  if (!cl.empty() && !bce.empty() && cl.size() != bce.size()) {
    throw DimensionError("total_loss: class count mismatch");
  }
  LossBreakdown out;
  out.bce.assign(bce.begin(), bce.end());
  out.cl.assign(cl.begin(), cl.end());
  if (out.cl.empty()) out.cl.assign(out.bce.size(), 0.0);
  if (out.bce.empty()) out.bce.assign(out.cl.size(), 0.0);
  double total = 0.0;
  for (double v : out.bce) total += v;
  for (double v : out.cl) total += v;
  out.total = total;
  return out;
}

ObjectiveResult evaluate_objective(const LinearHead& head, const FeatureBatch& batch, Mode mode) {
  const std::size_t n_reg = batch.regular_features.size();
  const std::size_t n_mix = batch.mixed_features.size();
  if (batch.regular_labels.size() != n_reg || batch.mixed_labels.size() != n_mix) {
    throw DimensionError("evaluate_objective: feature and label counts differ");
  }
  if (n_mix != batch.plan.n_mixed() || (n_mix > 0 && batch.plan.batch_size != n_reg)) {
    throw DimensionError("evaluate_objective: batch does not match its plan");
  }
  const std::size_t classes = head.classes;

  ObjectiveResult out;
  out.grad.weights.assign(head.weights.size(), 0.0);
  out.grad.bias.assign(classes, 0.0);
  std::vector<double> bce(classes, 0.0);
  std::vector<double> cl(classes, 0.0);
  std::vector<double> delta(classes);

  auto hard_term = [&](const std::vector<double>& pooled, const MultiHotLabel& y) {
    const Prediction p = predict_pooled(head, pooled);
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = y.test(c) ? 1.0 : 0.0;
      bce[c] += bce_term(target, p.probs[c]);
      delta[c] = p.probs[c] - target;
    }
    accumulate(out.grad, delta, pooled);
    return p;
  };

  std::vector<Prediction> regular_preds;
  regular_preds.reserve(n_reg);
  for (std::size_t i = 0; i < n_reg; ++i) {
    regular_preds.push_back(
        hard_term(global_max_pool(batch.regular_features[i]), batch.regular_labels[i]));
  }
  for (std::size_t i = 0; i < n_mix; ++i) {
    hard_term(global_max_pool(batch.mixed_features[i]), batch.mixed_labels[i]);
  }

  if (mode == Mode::splicemix_cl) {
    for (std::size_t i = 0; i < n_mix; ++i) {
      const auto& m = batch.plan.mixed[i];
      const auto subs = split_features(batch.mixed_features[i], m.grid);
      for (std::size_t k = 0; k < subs.size(); ++k) {
        // Target is a detached copy: no gradient flows into the regular branch.
        const auto& target = regular_preds[m.members[k]].probs;
        const auto pooled = global_max_pool(subs[k]);
        const Prediction sub = predict_pooled(head, pooled);
        for (std::size_t c = 0; c < classes; ++c) {
          cl[c] += bce_term(target[c], sub.probs[c]);
          delta[c] = sub.probs[c] - target[c];
        }
        accumulate(out.grad, delta, pooled);
      }
    }
  }

  out.loss = total_loss(bce, cl);
  check_finite(out.loss.total, "training loss");
  return out;
}

HeadGradient grad_total_loss(const LinearHead& head, const FeatureBatch& batch, Mode mode) {
  return evaluate_objective(head, batch, mode).grad;
}

LinearHead sgd_step(const LinearHead& head, const HeadGradient& grad, const SgdOptions& opts,
                    SgdState& state) {
  if (!(opts.lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  if (grad.weights.size() != head.weights.size() || grad.bias.size() != head.bias.size()) {
    throw DimensionError("sgd_step: gradient shape does not match the head");
  }
  if (state.weight_velocity.empty()) state.weight_velocity.assign(head.weights.size(), 0.0);
  if (state.bias_velocity.empty()) state.bias_velocity.assign(head.bias.size(), 0.0);

  LinearHead next = head;
  auto update = [&](std::vector<double>& params, const std::vector<double>& g,
                    std::vector<double>& velocity) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double step = g[i] + opts.weight_decay * params[i];
      velocity[i] = opts.momentum * velocity[i] + step;
      params[i] -= opts.lr * velocity[i];
    }
  };
  update(next.weights, grad.weights, state.weight_velocity);
  update(next.bias, grad.bias, state.bias_velocity);
  return next;
}

}  // namespace splicemix::model
