#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "splicemix/label.hpp"
#include "splicemix/rng.hpp"
#include "splicemix/tensor.hpp"

namespace splicemix {

/// Layout of one mixed image: its grid and the cells masked out by dropout.
struct GridSpec {
  GridGeometry geom;
  std::vector<std::size_t> dropped_cells;  // ascending, each < geom.cells()

  std::size_t live_cells() const { return geom.cells() - dropped_cells.size(); }
  bool is_dropped(std::size_t cell) const;
  /// Throws ConfigError unless at least one cell is live and indices are in range.
  void validate() const;
};

/// ⌊batch_size / (r·c − d)⌋ for a grid with d dropped cells.
std::size_t referenced_cardinality(std::size_t batch_size, const GridSpec& grid);

/// How the dropout count is sampled.
enum class DropoutScope {
  per_batch,  ///< one Bernoulli and one count for the batch; positions vary per image
  per_image,  ///< Bernoulli, count and positions drawn independently for every mixed image
};

/// What to do when n_mixed × live cells exceeds the regular batch.
enum class CardinalityPolicy {
  clamp,   ///< reduce n_mixed to the referenced cardinality
  strict,  ///< raise PlanningError
};

struct AugConfig {
  std::vector<GridGeometry> grid_family{{1, 2}, {2, 2}, {2, 3}};
  double dropout_prob = 0.3;
  double mixed_frac = 0.25;  // 0 disables mixing entirely
  double asymmetric_flip_prob = 0.5;
  std::uint64_t seed = 0;
  DropoutScope dropout_scope = DropoutScope::per_batch;
  CardinalityPolicy cardinality = CardinalityPolicy::clamp;
  /// Replaces max(1, ⌊mixed_frac·|B|⌋) when set; 0 yields a passthrough batch.
  std::optional<std::size_t> n_mixed_override;

  void validate() const;
  /// Requested number of mixed images before feasibility is applied.
  std::size_t target_mixed(std::size_t batch_size) const;
};

/// One mixed image: its grid layout and the regular indices filling the live cells.
struct MixedPlan {
  GridSpec grid;
  std::vector<std::size_t> members;  // Ω_i, in row-major order of the live cells

  /// Member index for each of the r·c cells, nullopt where dropped.
  std::vector<std::optional<std::size_t>> cell_members() const;
};

/// Full provenance of one augmentation pass.
struct BatchPlan {
  std::size_t batch_size = 0;
  GridGeometry geom{1, 1};
  std::size_t dropout_count = 0;  // shared count in per_batch scope
  std::vector<MixedPlan> mixed;

  std::size_t n_mixed() const { return mixed.size(); }
  std::size_t total_members() const;
  /// Throws PlanningError on duplicated or out-of-range members or inconsistent cell counts.
  void validate() const;
};

/// Samples grid, dropout and membership. Draw order on `rng`:
///   1. grid index uniform over cfg.grid_family
///   2. if rows != cols, bernoulli(asymmetric_flip_prob) swaps rows and cols
///   3. per_batch: bernoulli(dropout_prob); if true, d = 1 + uniform(r·c − 1)
///   4. per mixed image: d dropped cells by partial Fisher-Yates over [0, r·c)
///      (per_image scope draws bernoulli, count and cells here instead)
///   5. members by partial Fisher-Yates over [0, batch_size), consumed in
///      order across the live cells of each mixed image
/// No draws are made when the target mixed count is 0.
BatchPlan plan_batch(std::size_t batch_size, const AugConfig& cfg, SeededStream& rng);

/// Downsamples each member to (H/r, W/c) and tiles it into its live cell; dropped cells are 0.
std::vector<ImageTensor> mix_images(std::span<const ImageTensor> batch, const BatchPlan& plan);

/// Union of the live members' labels for each mixed image.
std::vector<MultiHotLabel> mix_labels(std::span<const MultiHotLabel> labels, const BatchPlan& plan);

struct Sample {
  ImageTensor image;
  MultiHotLabel label;
};

/// Regular batch followed by its mixed set, with the plan that produced it.
struct SplicedBatch {
  std::vector<Sample> regulars;
  std::vector<Sample> mixed;
  BatchPlan plan;

  std::size_t size() const { return regulars.size() + mixed.size(); }
};

/// Plans, mixes and concatenates. Regular samples are returned unchanged and in order.
SplicedBatch splicemix(std::span<const Sample> batch, const AugConfig& cfg, SeededStream& rng);

}  // namespace splicemix
