#include "splicemix/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splicemix/errors.hpp"

namespace splicemix {
namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

struct ImageLayout {
  std::size_t dropout = 0;
  std::vector<std::size_t> dropped;
};

std::vector<std::size_t> draw_dropped_cells(SeededStream& rng, std::size_t cells, std::size_t d) {
  if (d == 0) return {};
  auto dropped = rng.sample_without_replacement(cells, d);
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

}  // namespace

bool GridSpec::is_dropped(std::size_t cell) const {
  return std::binary_search(dropped_cells.begin(), dropped_cells.end(), cell);
}

void GridSpec::validate() const {
  if (geom.rows == 0 || geom.cols == 0) throw ConfigError("grid has zero rows or columns");
  if (dropped_cells.size() >= geom.cells()) {
    throw ConfigError("grid " + geom.to_string() + " with " +
                      std::to_string(dropped_cells.size()) + " dropped cells has no live cell");
  }
  for (std::size_t i = 0; i < dropped_cells.size(); ++i) {
    if (dropped_cells[i] >= geom.cells()) {
      throw ConfigError("dropped cell " + std::to_string(dropped_cells[i]) + " outside grid " +
                        geom.to_string());
    }
    if (i > 0 && dropped_cells[i] <= dropped_cells[i - 1]) {
      throw ConfigError("dropped cells must be strictly ascending");
    }
  }
}

std::size_t referenced_cardinality(std::size_t batch_size, const GridSpec& grid) {
  if (grid.dropped_cells.size() >= grid.geom.cells()) {
    throw PlanningError("referenced cardinality undefined: grid " + grid.geom.to_string() +
                        " has no live cells");
  }
  const std::size_t live = grid.live_cells();
  if (batch_size < live) {
    throw PlanningError("batch of " + std::to_string(batch_size) + " cannot fill " +
                        std::to_string(live) + " live cells");
  }
  return batch_size / live;
}

void AugConfig::validate() const {
  if (grid_family.empty()) throw ConfigError("grid_family must not be empty");
  for (const auto& g : grid_family) {
    if (g.rows == 0 || g.cols == 0 || g.cells() < 2) {
      throw ConfigError("grid " + g.to_string() + " must have at least two cells");
    }
  }
  if (!is_probability(dropout_prob)) throw ConfigError("dropout_prob must lie in [0, 1]");
  if (!is_probability(asymmetric_flip_prob)) {
    throw ConfigError("asymmetric_flip_prob must lie in [0, 1]");
  }
  if (!(mixed_frac >= 0.0 && mixed_frac <= 1.0)) throw ConfigError("mixed_frac must lie in [0, 1]");
}

std::size_t AugConfig::target_mixed(std::size_t batch_size) const {
  if (n_mixed_override) return *n_mixed_override;
  if (mixed_frac == 0.0 || batch_size == 0) return 0;
  const auto n = static_cast<std::size_t>(std::floor(mixed_frac * static_cast<double>(batch_size)));
  return std::max<std::size_t>(1, n);
}

std::vector<std::optional<std::size_t>> MixedPlan::cell_members() const {
  std::vector<std::optional<std::size_t>> cells(grid.geom.cells());
  std::size_t next = 0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (grid.is_dropped(k)) continue;
    if (next < members.size()) cells[k] = members[next++];
  }
  return cells;
}

std::size_t BatchPlan::total_members() const {
  std::size_t n = 0;
  for (const auto& m : mixed) n += m.members.size();
  return n;
}

void BatchPlan::validate() const {
  std::vector<bool> used(batch_size, false);
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    const auto& m = mixed[i];
    try {
      m.grid.validate();
    } catch (const ConfigError& e) {
      throw PlanningError("mixed image " + std::to_string(i) + ": " + e.what());
    }
    if (m.grid.geom != geom) {
      throw PlanningError("mixed image " + std::to_string(i) + " uses grid " +
                          m.grid.geom.to_string() + " but the batch grid is " + geom.to_string());
    }
    if (m.members.size() != m.grid.live_cells()) {
      throw PlanningError("mixed image " + std::to_string(i) + " has " +
                          std::to_string(m.members.size()) + " members for " +
                          std::to_string(m.grid.live_cells()) + " live cells");
    }
    for (auto idx : m.members) {
      if (idx >= batch_size) {
        throw PlanningError("member " + std::to_string(idx) + " outside batch of " +
                            std::to_string(batch_size));
      }
      if (used[idx]) {
        throw PlanningError("regular image " + std::to_string(idx) +
                            " attends to more than one mixed cell");
      }
      used[idx] = true;
    }
  }
}

BatchPlan plan_batch(std::size_t batch_size, const AugConfig& cfg, SeededStream& rng) {
  cfg.validate();
  BatchPlan plan;
  plan.batch_size = batch_size;
  const std::size_t target = cfg.target_mixed(batch_size);
  if (target == 0) return plan;

  GridGeometry geom = cfg.grid_family[static_cast<std::size_t>(rng.uniform(cfg.grid_family.size()))];
  if (!geom.symmetric() && rng.bernoulli(cfg.asymmetric_flip_prob)) geom = geom.transposed();
  plan.geom = geom;
  const std::size_t cells = geom.cells();

  std::vector<ImageLayout> layouts;
  if (cfg.dropout_scope == DropoutScope::per_batch) {
    if (rng.bernoulli(cfg.dropout_prob)) plan.dropout_count = 1 + rng.uniform(cells - 1);
    const std::size_t live = cells - plan.dropout_count;
    std::size_t n_mixed = target;
    if (n_mixed * live > batch_size) {
      if (cfg.cardinality == CardinalityPolicy::strict || batch_size < live) {
        throw PlanningError("infeasible plan: " + std::to_string(n_mixed) + " mixed images x " +
                            std::to_string(live) + " live cells of grid " + geom.to_string() +
                            " exceed a batch of " + std::to_string(batch_size));
      }
      n_mixed = batch_size / live;
    }
    layouts.resize(n_mixed);
    for (auto& layout : layouts) {
      layout.dropout = plan.dropout_count;
      layout.dropped = draw_dropped_cells(rng, cells, layout.dropout);
    }
  } else {
    layouts.resize(target);
    for (auto& layout : layouts) {
      if (rng.bernoulli(cfg.dropout_prob)) layout.dropout = 1 + rng.uniform(cells - 1);
      layout.dropped = draw_dropped_cells(rng, cells, layout.dropout);
    }
    std::size_t total = 0;
    std::size_t keep = 0;
    for (; keep < layouts.size(); ++keep) {
      const std::size_t live = cells - layouts[keep].dropout;
      if (total + live > batch_size) break;
      total += live;
    }
    if (keep < layouts.size()) {
      if (cfg.cardinality == CardinalityPolicy::strict || keep == 0) {
        throw PlanningError("infeasible plan: mixed images of grid " + geom.to_string() +
                            " need more than the " + std::to_string(batch_size) +
                            " available regular images");
      }
      layouts.resize(keep);
    }
  }

  std::size_t total_live = 0;
  for (const auto& layout : layouts) total_live += cells - layout.dropout;
  const auto omega = rng.sample_without_replacement(batch_size, total_live);

  std::size_t cursor = 0;
  plan.mixed.reserve(layouts.size());
  for (auto& layout : layouts) {
    MixedPlan m;
    m.grid = GridSpec{geom, std::move(layout.dropped)};
    const std::size_t live = m.grid.live_cells();
    m.members.assign(omega.begin() + static_cast<std::ptrdiff_t>(cursor),
                     omega.begin() + static_cast<std::ptrdiff_t>(cursor + live));
    cursor += live;
    plan.mixed.push_back(std::move(m));
  }
  return plan;
}

std::vector<ImageTensor> mix_images(std::span<const ImageTensor> batch, const BatchPlan& plan) {
  if (plan.n_mixed() == 0) return {};
  if (batch.size() != plan.batch_size) {
    throw DimensionError("plan expects a batch of " + std::to_string(plan.batch_size) +
                         " images, got " + std::to_string(batch.size()));
  }
  const ImageTensor& ref = batch.front();
  for (const auto& img : batch) {
    if (!img.same_shape(ref)) throw DimensionError("mix_images: batch resolution is not uniform");
  }
  const GridGeometry geom = plan.geom;
  if (ref.height() % geom.rows != 0 || ref.width() % geom.cols != 0) {
    throw DimensionError("mix_images: resolution " + std::to_string(ref.height()) + "x" +
                         std::to_string(ref.width()) + " is not divisible by grid " +
                         geom.to_string());
  }
  const std::size_t cell_h = ref.height() / geom.rows;
  const std::size_t cell_w = ref.width() / geom.cols;

  std::vector<ImageTensor> out;
  out.reserve(plan.n_mixed());
  for (const auto& m : plan.mixed) {
    std::vector<std::optional<ImageTensor>> cells(geom.cells());
    const auto members = m.cell_members();
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (members[k]) cells[k] = bilinear_downsample(batch[*members[k]], cell_h, cell_w);
    }
    out.push_back(grid_compose(cells, geom, 0.0f));
  }
  return out;
}

std::vector<MultiHotLabel> mix_labels(std::span<const MultiHotLabel> labels,
                                      const BatchPlan& plan) {
  std::vector<MultiHotLabel> out;
  out.reserve(plan.n_mixed());
  for (const auto& m : plan.mixed) {
    if (m.members.empty()) throw PlanningError("mixed image without members");
    MultiHotLabel y(labels[m.members.front()].num_classes());
    for (auto idx : m.members) {
      if (idx >= labels.size()) {
        throw DimensionError("member " + std::to_string(idx) + " outside label list of " +
                             std::to_string(labels.size()));
      }
      y |= labels[idx];
    }
    out.push_back(std::move(y));
  }
  return out;
}

SplicedBatch splicemix(std::span<const Sample> batch, const AugConfig& cfg, SeededStream& rng) {
  if (batch.empty()) throw DimensionError("splicemix: empty batch");
  SplicedBatch out;
  out.regulars.assign(batch.begin(), batch.end());
  out.plan = plan_batch(batch.size(), cfg, rng);
  if (out.plan.n_mixed() == 0) return out;

  std::vector<ImageTensor> images;
  std::vector<MultiHotLabel> labels;
  images.reserve(batch.size());
  labels.reserve(batch.size());
  for (const auto& s : batch) {
    images.push_back(s.image);
    labels.push_back(s.label);
  }
  auto mixed_images = mix_images(images, out.plan);
  auto mixed_labels = mix_labels(labels, out.plan);
  out.mixed.reserve(mixed_images.size());
  for (std::size_t i = 0; i < mixed_images.size(); ++i) {
    out.mixed.push_back({std::move(mixed_images[i]), std::move(mixed_labels[i])});
  }
  return out;
}

}  // namespace splicemix
