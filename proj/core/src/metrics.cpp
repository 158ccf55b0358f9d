#include "splicemix/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "splicemix/errors.hpp"

namespace splicemix::metrics {
namespace {

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalTable::EvalTable(std::size_t samples, std::size_t classes, std::vector<double> scores,
                     std::vector<std::uint8_t> labels)
    : samples_(samples), classes_(classes), scores_(std::move(scores)), labels_(std::move(labels)) {
  if (samples_ == 0 || classes_ == 0) throw DimensionError("evaluation table must be non-empty");
  if (scores_.size() != samples_ * classes_ || labels_.size() != samples_ * classes_) {
    throw DimensionError("evaluation table storage does not match " + std::to_string(samples_) +
                         "x" + std::to_string(classes_));
  }
}

std::vector<double> EvalTable::class_scores(std::size_t c) const {
  std::vector<double> out(samples_);
  for (std::size_t i = 0; i < samples_; ++i) out[i] = score(i, c);
  return out;
}

std::vector<std::uint8_t> EvalTable::class_labels(std::size_t c) const {
  std::vector<std::uint8_t> out(samples_);
  for (std::size_t i = 0; i < samples_; ++i) out[i] = labels_[i * classes_ + c];
  return out;
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: score and label lengths differ");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

MapResult map_score(const EvalTable& table) {
  MapResult out;
  out.per_class.resize(table.classes());
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < table.classes(); ++c) {
    const auto ap = average_precision(table.class_scores(c), table.class_labels(c));
    out.per_class[c] = ap;
    if (ap) {
      sum += *ap;
      ++counted;
    } else {
      out.skipped_classes.push_back(c);
    }
  }
  if (counted == 0) throw DimensionError("map_score: no class has a positive label");
  out.map = 100.0 * sum / static_cast<double>(counted);
  return out;
}

PrfScores prf_suite(const EvalTable& table, double threshold, std::optional<std::size_t> top_k,
                    TopKMode mode) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (top_k && *top_k == 0) throw ConfigError("top_k must be positive");
  const std::size_t n = table.samples();
  const std::size_t classes = table.classes();
  std::vector<std::size_t> tp(classes, 0), predicted(classes, 0), actual(classes, 0);
  std::vector<std::size_t> order(classes);
  std::vector<bool> eligible(classes, true);

  for (std::size_t i = 0; i < n; ++i) {
    if (top_k) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return table.score(i, a) > table.score(i, b);
      });
      std::fill(eligible.begin(), eligible.end(), false);
      for (std::size_t r = 0; r < std::min(*top_k, classes); ++r) eligible[order[r]] = true;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      bool positive = eligible[c];
      if (!top_k || mode == TopKMode::threshold_and_topk) {
        positive = positive && table.score(i, c) > threshold;
      }
      const bool truth = table.label(i, c);
      if (positive) ++predicted[c];
      if (truth) ++actual[c];
      if (positive && truth) ++tp[c];
    }
  }

  PrfScores s;
  double cp = 0.0, cr = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    cp += ratio(tp[c], predicted[c]);
    cr += ratio(tp[c], actual[c]);
  }
  s.cp = 100.0 * cp / static_cast<double>(classes);
  s.cr = 100.0 * cr / static_cast<double>(classes);
  s.cf1 = f1(s.cp, s.cr);
  const auto sum = [](const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{0});
  };
  s.op = 100.0 * ratio(sum(tp), sum(predicted));
  s.or_ = 100.0 * ratio(sum(tp), sum(actual));
  s.of1 = f1(s.op, s.or_);
  return s;
}

MetricsReport evaluate(const EvalTable& table, double threshold, TopKMode mode) {
  MetricsReport report;
  const auto m = map_score(table);
  report.map = m.map;
  report.per_class_ap = m.per_class;
  report.skipped_classes = m.skipped_classes;
  for (auto c : m.skipped_classes) {
    report.warnings.push_back("class " + std::to_string(c) + " has no positive label; skipped in mAP");
  }
  report.all = prf_suite(table, threshold);
  report.top3 = prf_suite(table, threshold, 3, mode);
  return report;
}

}  // namespace splicemix::metrics
