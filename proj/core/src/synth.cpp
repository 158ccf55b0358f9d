#include "splicemix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"

namespace splicemix::synth {
namespace {

// Stream ids for derive_seed; each consumer of randomness owns one.
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kBackboneStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAugStream = 3;

bool overlaps(const GlyphPlacement& a, const GlyphPlacement& b) {
  return a.y < b.y + b.h && b.y < a.y + a.h && a.x < b.x + b.w && b.x < a.x + a.w;
}

bool glyph_covers(GlyphShape shape, std::size_t h, std::size_t w, std::size_t dy, std::size_t dx) {
  switch (shape) {
    case GlyphShape::square:
      return true;
    case GlyphShape::bar: {
      const std::size_t bar_w = std::max<std::size_t>(1, w / 3);
      const std::size_t x0 = (w - bar_w) / 2;
      return dx >= x0 && dx < x0 + bar_w;
    }
    case GlyphShape::disc: {
      const double ry = static_cast<double>(h) / 2.0;
      const double rx = static_cast<double>(w) / 2.0;
      const double y = static_cast<double>(dy) + 0.5 - ry;
      const double x = static_cast<double>(dx) + 0.5 - rx;
      return (y * y) / (ry * ry) + (x * x) / (rx * rx) <= 1.0;
    }
  }
  return false;
}

std::array<float, 3> hsv_color(double hue, double sat, double val) {
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = val * (1.0 - sat);
  const double q = val * (1.0 - sat * f);
  const double t = val * (1.0 - sat * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  // Snap to 8-bit levels so colors survive PNG export exactly.
  auto q8 = [](double v) { return static_cast<float>(std::round(v * 255.0) / 255.0); };
  return {q8(r), q8(g), q8(b)};
}

// Greedy rejection placement; the whole layout is restarted a few times before giving up.
std::vector<GlyphPlacement> place_glyphs(const SynthConfig& cfg, const MultiHotLabel& label,
                                         SeededStream& rng) {
  constexpr std::size_t kRestarts = 20;
  const auto palette = cfg.resolved_palette();
  const double side = static_cast<double>(std::min(cfg.height, cfg.width));
  std::vector<GlyphPlacement> sized;
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    if (!label.test(k)) continue;
    const auto& style = palette[k];
    const double scale = style.min_scale + (style.max_scale - style.min_scale) * rng.uniform01();
    const auto size = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * side)), 1,
                                              std::min(cfg.height, cfg.width));
    sized.push_back({k, 0, 0, size, size});
  }
  for (std::size_t restart = 0; restart < kRestarts; ++restart) {
    std::vector<GlyphPlacement> glyphs;
    for (auto g : sized) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < cfg.max_place_attempts && !placed; ++attempt) {
        g.y = rng.uniform(cfg.height - g.h + 1);
        g.x = rng.uniform(cfg.width - g.w + 1);
        placed = std::none_of(glyphs.begin(), glyphs.end(),
                              [&](const GlyphPlacement& other) { return overlaps(g, other); });
      }
      if (!placed) break;
      glyphs.push_back(g);
    }
    if (glyphs.size() == sized.size()) return glyphs;
  }
  throw PlanningError("infeasible layout: cannot place " + std::to_string(sized.size()) +
                      " glyphs without overlap on a " + std::to_string(cfg.height) + "x" +
                      std::to_string(cfg.width) + " canvas");
}

SynthSample draw_sample(const SynthConfig& cfg, SeededStream& rng, bool train) {
  MultiHotLabel label(cfg.classes);
  for (std::size_t k = 0; k < cfg.classes; ++k) label.set(k, rng.bernoulli(cfg.prior(k)));
  for (const auto& pair : cfg.biased_pairs) {
    if (label.test(pair.b)) {
      label.set(pair.c, rng.bernoulli(train ? pair.co_occur_prob : cfg.test_co_occur_prob));
    }
  }
  SynthSample s{ImageTensor(3, cfg.height, cfg.width), label, {}, 0};
  s.glyphs = place_glyphs(cfg, label, rng);
  s.noise_seed = rng.next();
  s.image = render(cfg, s.glyphs, s.noise_seed);
  return s;
}

double mean_test_loss(const model::LinearHead& head, const std::vector<std::vector<double>>& pooled,
                      const std::vector<SynthSample>& samples) {
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto p = model::predict_pooled(head, pooled[i]);
    for (std::size_t c = 0; c < head.classes; ++c) {
      const double prob = std::clamp(p.probs[c], model::kProbEpsilon, 1.0 - model::kProbEpsilon);
      total -= samples[i].label.test(c) ? std::log(prob) : std::log(1.0 - prob);
    }
  }
  return total / static_cast<double>(samples.size());
}

// Everything a training run needs that depends on the seed only.
struct SeedContext {
  SynthConfig cfg;
  SynthDataset data;
  FeatureBank bank;
  std::vector<ImageTensor> train_features;
  std::vector<std::vector<double>> test_pooled;

  SeedContext(const SynthConfig& base, std::size_t filters, std::size_t kernel, std::uint64_t seed)
      : cfg(with_seed(base, derive_seed(seed, kDataStream))),
        data(gen_dataset(cfg)),
        bank(3, filters, derive_seed(seed, kBackboneStream), kernel) {
    train_features.reserve(data.train.size());
    for (const auto& s : data.train) train_features.push_back(bank.extract(s.image));
    test_pooled.reserve(data.test.size());
    for (const auto& s : data.test) test_pooled.push_back(model::global_max_pool(bank.extract(s.image)));
  }

  static SynthConfig with_seed(SynthConfig c, std::uint64_t seed) {
    c.seed = seed;
    return c;
  }
};

double split_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                const std::vector<std::size_t>& indices) {
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (auto i : indices) {
    s.push_back(scores[i]);
    y.push_back(labels[i]);
  }
  const auto ap = metrics::average_precision(s, y);
  return ap ? *ap : 0.0;
}

MethodRun train_on(const SeedContext& ctx, const AugConfig& aug, const TrainConfig& train,
                   Method method, std::uint64_t seed) {
  if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto& data = ctx.data;
  const std::size_t classes = ctx.cfg.classes;
  model::LinearHead head(classes, ctx.bank.dim());
  model::SgdState sgd_state;
  const model::SgdOptions sgd{train.lr / static_cast<double>(train.batch_size), train.momentum,
                              train.weight_decay};
  SeededStream shuffle_rng(derive_seed(seed, kShuffleStream));
  SeededStream aug_rng(derive_seed(seed, kAugStream));
  const auto mode = method == Method::splicemix_cl ? model::Mode::splicemix_cl : model::Mode::splicemix;

  MethodRun run;
  run.method = method;
  run.seed = seed;
  const std::size_t n = data.train.size();
  // Incomplete trailing batches are dropped so every step can hold a full mixed set.
  const std::size_t steps = n / train.batch_size;
  if (steps == 0) throw ConfigError("training set is smaller than one batch");
  const std::size_t used = steps * train.batch_size;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const auto order = shuffle_rng.sample_without_replacement(n, n);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < used; start += train.batch_size) {
      const std::size_t end = start + train.batch_size;
      model::FeatureBatch batch;
      std::vector<ImageTensor> images;
      for (std::size_t i = start; i < end; ++i) {
        batch.regular_features.push_back(ctx.train_features[order[i]]);
        batch.regular_labels.push_back(data.train[order[i]].label);
        images.push_back(data.train[order[i]].image);
      }
      batch.plan.batch_size = images.size();
      if (method != Method::baseline) {
        batch.plan = plan_batch(images.size(), aug, aug_rng);
        for (auto& mixed : mix_images(images, batch.plan)) {
          batch.mixed_features.push_back(ctx.bank.extract(mixed));
        }
        batch.mixed_labels = mix_labels(batch.regular_labels, batch.plan);
      }
      model::ObjectiveResult result;
      try {
        result = model::evaluate_objective(head, batch, mode);
      } catch (const DivergenceError& e) {
        throw DivergenceError(to_string(method) + " seed " + std::to_string(seed) + " epoch " +
                              std::to_string(epoch) + " step " +
                              std::to_string(start / train.batch_size) + ": " + e.what() +
                              " (lr " + std::to_string(train.lr) + ")");
      }
      epoch_loss += result.loss.total;
      head = model::sgd_step(head, result.grad, sgd, sgd_state);
    }
    run.train_curve.push_back(epoch_loss / static_cast<double>(used));
    run.test_curve.push_back(mean_test_loss(head, ctx.test_pooled, data.test));
  }
  run.final_train_loss = run.train_curve.empty() ? 0.0 : run.train_curve.back();
  run.test_loss = mean_test_loss(head, ctx.test_pooled, data.test);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto p = model::predict_pooled(head, ctx.test_pooled[i]);
    scores.insert(scores.end(), p.probs.begin(), p.probs.end());
    const auto bytes = data.test[i].label.to_bytes();
    labels.insert(labels.end(), bytes.begin(), bytes.end());
  }
  const metrics::EvalTable table(data.test.size(), classes, scores, labels);
  run.test_metrics = metrics::evaluate(table);
  run.full_map = run.test_metrics.map;

  double excl = 0.0, cooc = 0.0;
  for (const auto& split : data.splits) {
    const auto b_scores = table.class_scores(split.pair.b);
    const auto b_labels = table.class_labels(split.pair.b);
    excl += split_ap(b_scores, b_labels, split.exclusive);
    cooc += split_ap(b_scores, b_labels, split.cooccur);
  }
  if (!data.splits.empty()) {
    run.exclusive_map = 100.0 * excl / static_cast<double>(data.splits.size());
    run.cooccur_map = 100.0 * cooc / static_cast<double>(data.splits.size());
  }
  return run;
}

}  // namespace

void SynthConfig::validate() const {
  if (classes == 0) throw ConfigError("synth: classes must be positive");
  if (height == 0 || width == 0) throw ConfigError("synth: resolution must be positive");
  if (height % 6 != 0 || width % 6 != 0) {
    throw ConfigError("synth: resolution must be divisible by 6 so every default grid fits");
  }
  if (!class_prior.empty() && class_prior.size() != classes) {
    throw ConfigError("synth: class_prior needs one entry per class");
  }
  for (double p : class_prior) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: class priors must lie in [0, 1]");
  }
  if (!palette.empty() && palette.size() != classes) {
    throw ConfigError("synth: palette needs one style per class");
  }
  for (const auto& pair : biased_pairs) {
    if (pair.b >= classes || pair.c >= classes || pair.b == pair.c) {
      throw ConfigError("synth: biased pair must name two distinct classes");
    }
    if (!(pair.co_occur_prob >= 0.0 && pair.co_occur_prob <= 1.0)) {
      throw ConfigError("synth: co_occur_prob must lie in [0, 1]");
    }
  }
  if (!(test_co_occur_prob >= 0.0 && test_co_occur_prob <= 1.0)) {
    throw ConfigError("synth: test_co_occur_prob must lie in [0, 1]");
  }
  if (noise_amp < 0.0) throw ConfigError("synth: noise_amp must be non-negative");
}

double SynthConfig::prior(std::size_t k) const { return class_prior.empty() ? 0.3 : class_prior[k]; }

std::vector<ClassStyle> SynthConfig::resolved_palette() const {
  return palette.empty() ? default_palette(classes) : palette;
}

std::vector<ClassStyle> default_palette(std::size_t classes) {
  std::vector<ClassStyle> out(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& s = out[k];
    s.color = hsv_color(static_cast<double>(k) / static_cast<double>(classes), 0.75, 0.85);
    s.shape = static_cast<GlyphShape>(k % 3);
    if (k % 4 == 0) {
      s.min_scale = s.max_scale = 0.125;
    } else {
      s.min_scale = 0.2;
      s.max_scale = 0.3;
    }
  }
  return out;
}

ImageTensor render(const SynthConfig& cfg, const std::vector<GlyphPlacement>& glyphs,
                   std::uint64_t noise_seed) {
  ImageTensor img(3, cfg.height, cfg.width);
  const auto palette = cfg.resolved_palette();
  SeededStream noise(noise_seed);
  for (auto& v : img.data()) {
    const double value = cfg.background + cfg.noise_amp * noise.normal();
    v = static_cast<float>(std::clamp(value, 0.0, 1.0));
  }
  for (const auto& g : glyphs) {
    const auto& style = palette[g.cls];
    for (std::size_t dy = 0; dy < g.h; ++dy) {
      for (std::size_t dx = 0; dx < g.w; ++dx) {
        if (!glyph_covers(style.shape, g.h, g.w, dy, dx)) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(c, g.y + dy, g.x + dx) = style.color[c];
      }
    }
  }
  return img;
}

MultiHotLabel detect_classes(const SynthConfig& cfg, const ImageTensor& image) {
  MultiHotLabel label(cfg.classes);
  const auto palette = cfg.resolved_palette();
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t k = 0; k < cfg.classes; ++k) {
        const auto& color = palette[k].color;
        if (image.at(0, y, x) == color[0] && image.at(1, y, x) == color[1] &&
            image.at(2, y, x) == color[2]) {
          label.set(k);
        }
      }
    }
  }
  return label;
}

SynthDataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SeededStream rng(cfg.seed);
  SynthDataset data;
  data.train.reserve(cfg.train_n);
  for (std::size_t i = 0; i < cfg.train_n; ++i) data.train.push_back(draw_sample(cfg, rng, true));
  data.test.reserve(cfg.test_n);
  for (std::size_t i = 0; i < cfg.test_n; ++i) data.test.push_back(draw_sample(cfg, rng, false));

  for (const auto& pair : cfg.biased_pairs) {
    PairSplits split{pair, {}, {}};
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const auto& y = data.test[i].label;
      if (!y.test(pair.b)) {
        split.exclusive.push_back(i);
        split.cooccur.push_back(i);
      } else if (y.test(pair.c)) {
        split.cooccur.push_back(i);
      } else {
        split.exclusive.push_back(i);
      }
    }
    data.splits.push_back(std::move(split));
  }
  return data;
}

FeatureBank::FeatureBank(std::size_t in_channels, std::size_t filters, std::uint64_t seed,
                         std::size_t kernel)
    : in_channels_(in_channels), filters_(filters), kernel_(kernel) {
  if (in_channels == 0 || filters == 0) throw ConfigError("feature bank needs channels and filters");
  if (kernel % 2 == 0) throw ConfigError("feature bank kernel size must be odd");
  SeededStream rng(seed);
  const std::size_t taps = in_channels * kernel * kernel;
  const double scale = 1.0 / std::sqrt(static_cast<double>(taps));
  weights_.resize(filters * taps);
  for (auto& w : weights_) w = static_cast<float>(scale * rng.normal());
  bias_.resize(filters);
  for (auto& b : bias_) b = static_cast<float>(0.1 * rng.normal());
}

ImageTensor FeatureBank::extract(const ImageTensor& image) const {
  if (image.channels() != in_channels_) {
    throw DimensionError("feature bank expects " + std::to_string(in_channels_) + " channels, got " +
                         std::to_string(image.channels()));
  }
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const auto half = static_cast<std::ptrdiff_t>(kernel_ / 2);
  const std::size_t area = kernel_ * kernel_;
  ImageTensor out(filters_, h, w);
  // Inputs are centered on mid-gray so a flat background yields bias-only responses.
  std::vector<float> centered(image.data().begin(), image.data().end());
  for (auto& v : centered) v -= 0.5f;
  for (std::size_t f = 0; f < filters_; ++f) {
    const float* kernel = &weights_[f * in_channels_ * area];
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        float acc = bias_[f];
        for (std::size_t c = 0; c < in_channels_; ++c) {
          const float* plane = &centered[c * h * w];
          const float* k = kernel + c * area;
          for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
              const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += k[static_cast<std::size_t>((dy + half) * static_cast<std::ptrdiff_t>(kernel_) + dx + half)] *
                     plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
            }
          }
        }
        out.at(f, y, x) = std::max(acc, 0.0f);
      }
    }
  }
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::splicemix: return "splicemix";
    case Method::splicemix_cl: return "splicemix_cl";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "baseline") return Method::baseline;
  if (name == "splicemix") return Method::splicemix;
  if (name == "splicemix_cl") return Method::splicemix_cl;
  throw ConfigError("unknown method '" + name + "' (expected baseline, splicemix or splicemix_cl)");
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("no methods given");
  return out;
}

const MethodRun& ExperimentReport::find(Method m, std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.method == m && r.seed == seed) return r;
  }
  throw Error("no run for " + to_string(m) + " seed " + std::to_string(seed));
}

MethodRun train_method(const SynthConfig& cfg, const AugConfig& aug, const TrainConfig& train,
                       Method method, std::uint64_t seed) {
  const SeedContext ctx(cfg, train.filters, train.kernel, seed);
  return train_on(ctx, aug, train, method, seed);
}

ExperimentReport run_experiment(const SynthConfig& cfg, const AugConfig& aug,
                                const TrainConfig& train, const std::vector<Method>& methods,
                                const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  aug.validate();
  ExperimentReport report;
  report.seeds = seeds;
  std::vector<std::vector<MethodRun>> per_seed(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());

  auto work = [&](std::size_t s) {
    try {
      const SeedContext ctx(cfg, train.filters, train.kernel, seeds[s]);
      for (auto m : methods) per_seed[s].push_back(train_on(ctx, aug, train, m, seeds[s]));
    } catch (...) {
      errors[s] = std::current_exception();
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, seeds.size()));
  if (threads == 1) {
    for (std::size_t s = 0; s < seeds.size(); ++s) work(s);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t s = t; s < seeds.size(); s += threads) work(s);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& runs : per_seed) {
    for (auto& r : runs) report.runs.push_back(std::move(r));
  }
  return report;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"method", to_string(r.method)},
                    {"seed", r.seed},
                    {"exclusive_map", r.exclusive_map},
                    {"cooccur_map", r.cooccur_map},
                    {"full_map", r.full_map},
                    {"final_train_loss", r.final_train_loss},
                    {"test_loss", r.test_loss},
                    {"train_curve", r.train_curve},
                    {"test_curve", r.test_curve},
                    {"metrics", io::metrics_to_json(r.test_metrics)}});
  }
  return {{"seeds", report.seeds}, {"runs", runs}};
}

std::string curves_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,method,seed,train_loss,test_loss\n";
  for (const auto& r : report.runs) {
    for (std::size_t e = 0; e < r.train_curve.size(); ++e) {
      out << e + 1 << ',' << to_string(r.method) << ',' << r.seed << ',' << r.train_curve[e] << ','
          << r.test_curve[e] << '\n';
    }
  }
  return out.str();
}

}  // namespace splicemix::synth
