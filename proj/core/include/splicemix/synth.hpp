#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splicemix/augment.hpp"
#include "splicemix/metrics.hpp"
#include "splicemix/model.hpp"
#include "splicemix/rng.hpp"
#include "splicemix/tensor.hpp"

namespace splicemix::synth {

enum class GlyphShape { square, disc, bar };

/// Appearance of one class. Glyph pixels carry exactly `color`; sizes are
/// fractions of the canvas side.
struct ClassStyle {
  std::array<float, 3> color{};
  GlyphShape shape = GlyphShape::square;
  double min_scale = 0.25;
  double max_scale = 0.35;
};

/// In training data, presence of `b` implies presence of `c` with probability `co_occur_prob`.
struct BiasedPair {
  std::size_t b = 0;
  std::size_t c = 1;
  double co_occur_prob = 0.95;
};

struct SynthConfig {
  std::size_t classes = 8;
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t train_n = 512;
  std::size_t test_n = 512;
  std::vector<double> class_prior;  // empty: 0.3 for every class
  std::vector<BiasedPair> biased_pairs{{0, 1, 0.95}};
  double test_co_occur_prob = 0.5;  // pair coupling used for the test split
  std::vector<ClassStyle> palette;  // empty: default_palette(classes)
  double background = 0.5;
  double noise_amp = 0.12;
  std::size_t max_place_attempts = 200;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  double prior(std::size_t k) const;
  /// `palette`, or default_palette(classes) when it is empty.
  std::vector<ClassStyle> resolved_palette() const;
};

/// Distinct colors and shapes; every fourth class is a small (1/8 canvas) glyph.
std::vector<ClassStyle> default_palette(std::size_t classes);

struct GlyphPlacement {
  std::size_t cls = 0;
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t h = 0;
  std::size_t w = 0;
};

struct SynthSample {
  ImageTensor image;
  MultiHotLabel label;
  std::vector<GlyphPlacement> glyphs;
  std::uint64_t noise_seed = 0;
};

/// Images of one bias protocol split for a (b, c) pair, as test-set indices.
struct PairSplits {
  BiasedPair pair;
  std::vector<std::size_t> exclusive;  // b without c, plus images without b
  std::vector<std::size_t> cooccur;    // b with c, plus images without b
};

struct SynthDataset {
  std::vector<SynthSample> train;
  std::vector<SynthSample> test;
  std::vector<PairSplits> splits;
};

/// Seed-deterministic generation. Throws PlanningError when glyphs cannot be
/// placed without overlap.
SynthDataset gen_dataset(const SynthConfig& cfg);

/// Renders a layout: noisy background, then glyphs in their exact colors.
ImageTensor render(const SynthConfig& cfg, const std::vector<GlyphPlacement>& glyphs,
                   std::uint64_t noise_seed);

/// Recovers labels from pixels: class k is present iff some pixel equals its color exactly.
MultiHotLabel detect_classes(const SynthConfig& cfg, const ImageTensor& image);

/// Fixed random kxk convolution bank with zero padding and ReLU; the
/// stand-in backbone whose feature maps are pooled by the linear head.
class FeatureBank {
 public:
  FeatureBank(std::size_t in_channels, std::size_t filters, std::uint64_t seed,
              std::size_t kernel = 1);

  std::size_t dim() const { return filters_; }
  ImageTensor extract(const ImageTensor& image) const;

 private:
  std::size_t in_channels_;
  std::size_t filters_;
  std::size_t kernel_;
  std::vector<float> weights_;  // [filters][in_channels][kernel][kernel]
  std::vector<float> bias_;
};

enum class Method { baseline, splicemix, splicemix_cl };

std::string to_string(Method m);
Method parse_method(const std::string& name);
std::vector<Method> parse_methods(const std::string& list);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.05;  // divided by batch_size at each step
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t filters = 32;
  std::size_t kernel = 1;  // 1x1 keeps pooled glyph responses stable under downsampling
};

struct MethodRun {
  Method method = Method::baseline;
  std::uint64_t seed = 0;
  double exclusive_map = 0.0;  // percent, AP of b on its exclusive split, averaged over pairs
  double cooccur_map = 0.0;
  double full_map = 0.0;       // percent, every class on the whole test split
  double final_train_loss = 0.0;
  double test_loss = 0.0;      // mean per-sample BCE summed over classes
  std::vector<double> train_curve;  // per epoch, mean total loss per regular sample
  std::vector<double> test_curve;
  metrics::MetricsReport test_metrics;
};

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<MethodRun> runs;

  const MethodRun& find(Method m, std::uint64_t seed) const;
};

/// Trains one method on one seed. Data and backbone depend on the seed only,
/// so every method sees identical inputs.
MethodRun train_method(const SynthConfig& cfg, const AugConfig& aug, const TrainConfig& train,
                       Method method, std::uint64_t seed);

/// Every (seed, method) pair; seeds may run on `threads` workers, results are ordered by seed then method.
ExperimentReport run_experiment(const SynthConfig& cfg, const AugConfig& aug,
                                const TrainConfig& train, const std::vector<Method>& methods,
                                const std::vector<std::uint64_t>& seeds, std::size_t threads = 1);

nlohmann::json report_to_json(const ExperimentReport& report);
/// epoch,method,seed,train_loss,test_loss rows.
std::string curves_csv(const ExperimentReport& report);

}  // namespace splicemix::synth
