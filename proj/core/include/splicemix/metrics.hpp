#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splicemix::metrics {

/// N x C scores with matching multi-hot labels, both row-major.
class EvalTable {
 public:
  EvalTable(std::size_t samples, std::size_t classes, std::vector<double> scores,
            std::vector<std::uint8_t> labels);

  std::size_t samples() const { return samples_; }
  std::size_t classes() const { return classes_; }
  double score(std::size_t i, std::size_t c) const { return scores_[i * classes_ + c]; }
  bool label(std::size_t i, std::size_t c) const { return labels_[i * classes_ + c] != 0; }
  std::span<const double> scores() const { return scores_; }
  std::span<const std::uint8_t> labels() const { return labels_; }

  std::vector<double> class_scores(std::size_t c) const;
  std::vector<std::uint8_t> class_labels(std::size_t c) const;

 private:
  std::size_t samples_;
  std::size_t classes_;
  std::vector<double> scores_;
  std::vector<std::uint8_t> labels_;
};

/// Non-interpolated AP: mean of precision@k over the ranks k of the
/// positives, ranking by descending score with ties broken by ascending
/// sample index. nullopt when there is no positive.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

struct MapResult {
  double map = 0.0;                              // percent
  std::vector<std::optional<double>> per_class;  // fraction, nullopt for skipped classes
  std::vector<std::size_t> skipped_classes;      // classes without any positive
};

/// Mean AP (percent) over classes with at least one positive. Throws
/// DimensionError when every class is empty.
MapResult map_score(const EvalTable& table);

/// How top-k eligibility combines with the score threshold.
enum class TopKMode {
  threshold_and_topk,  ///< positive iff among the sample's top-k AND score > threshold
  topk_only,           ///< positive iff among the sample's top-k
};

struct PrfScores {
  double cp = 0.0;
  double cr = 0.0;
  double cf1 = 0.0;
  double op = 0.0;
  double or_ = 0.0;
  double of1 = 0.0;
};

/// Per-class (CP/CR/CF1) and overall (OP/OR/OF1) precision, recall and F1 in
/// percent. A class with no predicted positive has precision 0; one with no
/// ground-truth positive has recall 0. F1 is 0 when P + R is 0. Top-k ties
/// are broken by ascending class index.
PrfScores prf_suite(const EvalTable& table, double threshold = 0.5,
                    std::optional<std::size_t> top_k = std::nullopt,
                    TopKMode mode = TopKMode::threshold_and_topk);

struct MetricsReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::size_t> skipped_classes;
  PrfScores all;
  PrfScores top3;
  std::vector<std::string> warnings;
};

MetricsReport evaluate(const EvalTable& table, double threshold = 0.5,
                       TopKMode mode = TopKMode::threshold_and_topk);

}  // namespace splicemix::metrics
