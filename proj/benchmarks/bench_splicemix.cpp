#include <benchmark/benchmark.h>

#include "splicemix/augment.hpp"
#include "splicemix/metrics.hpp"
#include "splicemix/model.hpp"
#include "splicemix/rng.hpp"

using namespace splicemix;

namespace {

ImageTensor noise(SeededStream& rng, std::size_t c, std::size_t h, std::size_t w) {
  ImageTensor t(c, h, w);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform01());
  return t;
}

std::vector<Sample> make_batch(std::size_t n, std::size_t side) {
  SeededStream rng(1);
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < n; ++i) {
    MultiHotLabel y(20);
    for (std::size_t k = 0; k < 20; ++k) y.set(k, rng.bernoulli(0.1));
    batch.push_back({noise(rng, 3, side, side), y});
  }
  return batch;
}

}  // namespace

static void BM_BilinearHalf(benchmark::State& state) {
  SeededStream rng(1);
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto img = noise(rng, 3, side, side);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_downsample(img, side / 2, side / 2));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BilinearHalf)->Arg(64)->Arg(224)->Arg(448);

static void BM_GridCompose2x2(benchmark::State& state) {
  SeededStream rng(2);
  const auto side = static_cast<std::size_t>(state.range(0));
  std::vector<std::optional<ImageTensor>> cells;
  for (int k = 0; k < 4; ++k) cells.emplace_back(noise(rng, 3, side / 2, side / 2));
  for (auto _ : state) benchmark::DoNotOptimize(grid_compose(cells, {2, 2}));
}
BENCHMARK(BM_GridCompose2x2)->Arg(224)->Arg(448);

static void BM_PlanBatch(benchmark::State& state) {
  AugConfig cfg;
  SeededStream rng(3);
  const auto b = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(plan_batch(b, cfg, rng));
}
BENCHMARK(BM_PlanBatch)->Arg(32)->Arg(256);

static void BM_SpliceMixBatch(benchmark::State& state) {
  const auto batch = make_batch(32, static_cast<std::size_t>(state.range(0)));
  AugConfig cfg;
  SeededStream rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(splicemix::splicemix(batch, cfg, rng));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_SpliceMixBatch)->Arg(96)->Arg(192)->Unit(benchmark::kMillisecond);

static void BM_Objective(benchmark::State& state) {
  SeededStream rng(5);
  AugConfig cfg;
  model::FeatureBatch fb;
  fb.plan = plan_batch(32, cfg, rng);
  for (std::size_t i = 0; i < 32; ++i) {
    fb.regular_features.push_back(noise(rng, 64, 12, 12));
    fb.regular_labels.emplace_back(20);
  }
  for (const auto& m : fb.plan.mixed) {
    fb.mixed_features.push_back(noise(rng, 64, 12, 12));
    fb.mixed_labels.emplace_back(20);
    (void)m;
  }
  model::LinearHead head(20, 64);
  const auto mode = state.range(0) ? model::Mode::splicemix_cl : model::Mode::splicemix;
  for (auto _ : state) benchmark::DoNotOptimize(model::evaluate_objective(head, fb, mode));
}
BENCHMARK(BM_Objective)->Arg(0)->Arg(1);

static void BM_MapScore(benchmark::State& state) {
  SeededStream rng(6);
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 80;
  std::vector<double> s(n * c);
  std::vector<std::uint8_t> y(n * c);
  for (auto& v : s) v = rng.uniform01();
  for (auto& v : y) v = rng.bernoulli(0.05);
  const metrics::EvalTable table(n, c, s, y);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(table));
}
BENCHMARK(BM_MapScore)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
