#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "splicemix/augment.hpp"
#include "splicemix/label.hpp"
#include "splicemix/tensor.hpp"

namespace splicemix::model {

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before any logarithm.
inline constexpr double kProbEpsilon = 1e-7;

/// Linear classifier: logits = W·x + b with W stored row-major as classes x dim.
struct LinearHead {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  LinearHead() = default;
  LinearHead(std::size_t num_classes, std::size_t feature_dim);

  double& weight(std::size_t c, std::size_t d) { return weights[c * dim + d]; }
  double weight(std::size_t c, std::size_t d) const { return weights[c * dim + d]; }

  /// Throws DimensionError on inconsistent sizes, DivergenceError on non-finite entries.
  void validate() const;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
};

/// Per-sample predictions. stop_grad marks detached copies used as soft targets.
struct PredictionSet {
  std::vector<Prediction> rows;
  bool stop_grad = false;

  std::size_t size() const { return rows.size(); }
  /// Copy with stop_grad set.
  PredictionSet detached() const;
};

double sigmoid(double z);

/// Per-channel spatial maximum.
std::vector<double> global_max_pool(const ImageTensor& features);

Prediction predict_pooled(const LinearHead& head, std::span<const double> pooled);
/// sigmoid(W·gmp(F) + b).
Prediction predict(const LinearHead& head, const ImageTensor& features);
PredictionSet predict_all(const LinearHead& head, std::span<const ImageTensor> features,
                          bool stop_grad = false);

/// Σ_i −y·log p − (1−y)·log(1−p), kept per class.
std::vector<double> bce_loss(const PredictionSet& preds, std::span<const MultiHotLabel> labels);

/// Live-cell sub-maps of a mixed image's feature map, row-major.
std::vector<ImageTensor> split_features(const ImageTensor& features, const GridSpec& grid);
/// Re-tiles live sub-maps; dropped cells get `fill`.
ImageTensor recover_features(std::span<const ImageTensor> live_cells, const GridSpec& grid,
                             float fill = 0.0f);

/// Consistency loss. `sub_preds` is ordered by mixed image, then by member
/// order within Ω_i; `regular_targets` is indexed by regular batch position
/// and must be a stop-grad set.
std::vector<double> cl_loss(const PredictionSet& regular_targets, const PredictionSet& sub_preds,
                            const BatchPlan& plan);

struct LossBreakdown {
  std::vector<double> bce;
  std::vector<double> cl;
  double total = 0.0;
};

/// total = Σ bce + Σ cl.
LossBreakdown total_loss(std::span<const double> bce, std::span<const double> cl);

enum class Mode { splicemix, splicemix_cl };

/// Feature maps and labels of one spliced batch. mixed_features[i] is the
/// feature map of plan.mixed[i]'s image.
struct FeatureBatch {
  std::vector<ImageTensor> regular_features;
  std::vector<MultiHotLabel> regular_labels;
  std::vector<ImageTensor> mixed_features;
  std::vector<MultiHotLabel> mixed_labels;
  BatchPlan plan;
};

struct HeadGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct ObjectiveResult {
  LossBreakdown loss;
  HeadGradient grad;
};

/// Loss and its exact gradient. BCE covers regular and mixed samples; in
/// splicemix_cl mode each live sub-image of a mixed feature map is also
/// pulled towards the detached prediction of its regular image.
ObjectiveResult evaluate_objective(const LinearHead& head, const FeatureBatch& batch, Mode mode);

HeadGradient grad_total_loss(const LinearHead& head, const FeatureBatch& batch, Mode mode);

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Momentum buffers; empty buffers are treated as zero.
struct SgdState {
  std::vector<double> weight_velocity;
  std::vector<double> bias_velocity;
};

/// v ← μ·v + (g + λ·w); w ← w − lr·v, applied to weights and bias alike.
LinearHead sgd_step(const LinearHead& head, const HeadGradient& grad, const SgdOptions& opts,
                    SgdState& state);

}  // namespace splicemix::model
