#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "splicemix/errors.hpp"
#include "splicemix/synth.hpp"

using namespace splicemix;
using namespace splicemix::synth;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.train_n = 64;
  cfg.test_n = 64;
  cfg.seed = seed;
  return cfg;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 16;
  t.filters = 8;
  return t;
}

bool same_run(const MethodRun& a, const MethodRun& b) {
  return a.exclusive_map == b.exclusive_map && a.cooccur_map == b.cooccur_map &&
         a.full_map == b.full_map && a.test_loss == b.test_loss &&
         a.final_train_loss == b.final_train_loss && a.train_curve == b.train_curve &&
         a.test_curve == b.test_curve;
}

}  // namespace

TEST(SynthConfig, Validation) {
  SynthConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.biased_pairs = {{0, 0, 0.5}};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.biased_pairs = {{0, 9, 0.5}};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.class_prior = {0.5};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.test_co_occur_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(DefaultPalette, DistinctColors) {
  const auto palette = default_palette(8);
  std::set<std::array<float, 3>> colors;
  for (const auto& s : palette) colors.insert(s.color);
  EXPECT_EQ(colors.size(), 8u);
  EXPECT_EQ(palette[4].max_scale, 0.125);
}

TEST(GenDataset, Deterministic) {
  const auto a = gen_dataset(small_config(3));
  const auto b = gen_dataset(small_config(3));
  const auto c = gen_dataset(small_config(4));
  ASSERT_EQ(a.train.size(), 64u);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_TRUE(a.train[i].image.bit_equal(b.train[i].image));
    EXPECT_EQ(a.train[i].label, b.train[i].label);
    differs = differs || !a.train[i].image.bit_equal(c.train[i].image);
  }
  EXPECT_TRUE(differs);
}

TEST(GenDataset, FullCouplingNeverLeavesBAlone) {
  auto cfg = small_config(5);
  cfg.train_n = 300;
  cfg.biased_pairs = {{0, 1, 1.0}};
  const auto data = gen_dataset(cfg);
  std::size_t with_b = 0;
  for (const auto& s : data.train) {
    if (s.label.test(0)) {
      ++with_b;
      EXPECT_TRUE(s.label.test(1));
    }
  }
  EXPECT_GT(with_b, 0u);
}

TEST(GenDataset, ZeroCouplingNeverPairs) {
  auto cfg = small_config(6);
  cfg.train_n = 300;
  cfg.biased_pairs = {{0, 1, 0.0}};
  const auto data = gen_dataset(cfg);
  std::size_t with_b = 0;
  for (const auto& s : data.train) {
    if (s.label.test(0)) {
      ++with_b;
      EXPECT_FALSE(s.label.test(1));
    }
  }
  EXPECT_GT(with_b, 0u);
}

TEST(GenDataset, LabelsRecoveredFromPixels) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto cfg = small_config(seed);
    const auto data = gen_dataset(cfg);
    for (const auto* split : {&data.train, &data.test}) {
      for (const auto& s : *split) {
        ASSERT_EQ(detect_classes(cfg, s.image), s.label);
        ASSERT_TRUE(render(cfg, s.glyphs, s.noise_seed).bit_equal(s.image));
      }
    }
  }
}

TEST(GenDataset, GlyphsDoNotOverlap) {
  const auto data = gen_dataset(small_config(9));
  for (const auto& s : data.train) {
    for (std::size_t i = 0; i < s.glyphs.size(); ++i) {
      for (std::size_t j = i + 1; j < s.glyphs.size(); ++j) {
        const auto& a = s.glyphs[i];
        const auto& b = s.glyphs[j];
        const bool apart = a.x + a.w <= b.x || b.x + b.w <= a.x || a.y + a.h <= b.y || b.y + b.h <= a.y;
        ASSERT_TRUE(apart);
      }
    }
  }
}

TEST(GenDataset, SplitsPartitionByPair) {
  const auto data = gen_dataset(small_config(10));
  ASSERT_EQ(data.splits.size(), 1u);
  const auto& sp = data.splits[0];
  for (auto i : sp.exclusive) EXPECT_FALSE(data.test[i].label.test(0) && data.test[i].label.test(1));
  for (auto i : sp.cooccur) EXPECT_TRUE(!data.test[i].label.test(0) || data.test[i].label.test(1));
  std::set<std::size_t> all(sp.exclusive.begin(), sp.exclusive.end());
  all.insert(sp.cooccur.begin(), sp.cooccur.end());
  EXPECT_EQ(all.size(), data.test.size());
}

TEST(GenDataset, InfeasibleLayoutRaises) {
  SynthConfig cfg = small_config(1);
  cfg.height = cfg.width = 6;
  cfg.class_prior.assign(cfg.classes, 1.0);
  cfg.palette = default_palette(cfg.classes);
  for (auto& s : cfg.palette) s.min_scale = s.max_scale = 0.5;
  EXPECT_THROW(gen_dataset(cfg), PlanningError);
}

TEST(FeatureBank, ShapesAndErrors) {
  FeatureBank bank(3, 5, 1, 3);
  const auto f = bank.extract(ImageTensor(3, 4, 6, 0.5f));
  EXPECT_EQ(f.channels(), 5u);
  EXPECT_EQ(f.height(), 4u);
  EXPECT_EQ(f.width(), 6u);
  for (float v : f.data()) EXPECT_GE(v, 0.0f);
  EXPECT_THROW(FeatureBank(3, 5, 1, 2), ConfigError);
  EXPECT_THROW(FeatureBank(0, 5, 1), ConfigError);
  EXPECT_THROW(bank.extract(ImageTensor(1, 4, 4)), DimensionError);
}

TEST(Methods, ParseAndFormat) {
  EXPECT_EQ(parse_methods("baseline,splicemix,splicemix_cl"),
            (std::vector<Method>{Method::baseline, Method::splicemix, Method::splicemix_cl}));
  EXPECT_EQ(to_string(Method::splicemix_cl), "splicemix_cl");
  EXPECT_THROW(parse_method("cutmix"), ConfigError);
}

TEST(RunExperiment, ZeroEpochsIsUntrainedSanityRow) {
  auto train = quick_train();
  train.epochs = 0;
  const auto report = run_experiment(small_config(0), AugConfig{}, train, {Method::baseline}, {1});
  ASSERT_EQ(report.runs.size(), 1u);
  const auto& r = report.runs[0];
  EXPECT_TRUE(r.train_curve.empty());
  EXPECT_TRUE(std::isfinite(r.full_map));
  EXPECT_GT(r.full_map, 0.0);
  EXPECT_LE(r.full_map, 100.0);
}

TEST(RunExperiment, NoMixingEqualsBaseline) {
  AugConfig aug;
  aug.mixed_frac = 0.0;
  const auto report = run_experiment(small_config(0), aug, quick_train(),
                                     {Method::baseline, Method::splicemix}, {2});
  EXPECT_TRUE(same_run(report.find(Method::baseline, 2), report.find(Method::splicemix, 2)));
}

TEST(RunExperiment, DeterministicAcrossThreadCounts) {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<Method> methods{Method::splicemix, Method::splicemix_cl};
  const auto a = run_experiment(small_config(0), AugConfig{}, quick_train(), methods, seeds, 1);
  const auto b = run_experiment(small_config(0), AugConfig{}, quick_train(), methods, seeds, 3);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(curves_csv(a), curves_csv(b));
  ASSERT_EQ(a.runs.size(), 6u);
  EXPECT_EQ(a.runs[0].seed, 1u);
  EXPECT_EQ(a.runs[1].method, Method::splicemix_cl);
}

TEST(RunExperiment, TrainingLowersLoss) {
  auto train = quick_train();
  train.epochs = 5;
  auto cfg = small_config(0);
  cfg.train_n = 256;
  const auto r = train_method(cfg, AugConfig{}, train, Method::baseline, 4);
  ASSERT_EQ(r.train_curve.size(), 5u);
  EXPECT_LT(r.train_curve.back(), r.train_curve.front());
}
