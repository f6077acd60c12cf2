#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "suas/footprints.hpp"
#include "suas/geo_raster.hpp"
#include "suas/inference.hpp"
#include "suas/memory_budget.hpp"
#include "suas/warning.hpp"

namespace suas::assessment {

using ClassSums = std::array<double, kNumClasses>;

enum Flag : std::uint8_t {
  kLowCoverage = 1u << 0,
  kOffRaster = 1u << 1,
  kTieBroken = 1u << 2,
};

// Flag names in canonical order: low_coverage, off_raster, tie_broken.
std::vector<std::string> FlagNames(std::uint8_t flags);
std::uint8_t ParseFlag(std::string_view name);  // 0 if unknown

struct BuildingAssessment {
  std::string building_id;
  ClassSums class_sums{};
  std::int64_t pixel_count = 0;
  DamageClass predicted = DamageClass::kUnClassified;
  std::uint8_t flags = 0;

  bool has(Flag f) const { return (flags & f) != 0; }
  friend bool operator==(const BuildingAssessment&, const BuildingAssessment&) = default;
};

enum class ConsolidationMode {
  kScoreSum,   // sum raw scores per class
  kVoteCount,  // count per-pixel argmax votes
};

// Argmax with ties going to the more severe class (un_classified loses every
// tie). `tied` is set when more than one class attains the maximum.
DamageClass ArgmaxWithTieRule(const ClassSums& sums, bool* tied = nullptr);

// Per-building partial sums; merging is plain addition.
struct Accumulator {
  ClassSums sums{};
  std::int64_t pixel_count = 0;

  void Merge(const Accumulator& other);
};

// Adds the scores under `mask` (absolute pixel coords inside `tile.window`).
void Accumulate(const footprints::PixelMask& mask, const geo::Tile& tile,
                const inference::ScorePlaneTile& scores, ConsolidationMode mode, Accumulator& acc);

BuildingAssessment Finalize(std::string building_id, const Accumulator& acc,
                            std::int64_t min_pixels);

struct MaskFragment {
  geo::Tile tile;
  footprints::PixelMask mask;
};

// Returns nullptr when no scores exist for the tile.
using ScoreLookup =
    std::function<const inference::ScorePlaneTile*(std::int64_t tile_col, std::int64_t tile_row)>;

struct ConsolidateOptions {
  std::int64_t min_pixels = 1;
  ConsolidationMode mode = ConsolidationMode::kScoreSum;
};

// Throws kMissingScores naming the tile when a fragment with pixels has no
// score tile.
BuildingAssessment Consolidate(std::string building_id, std::span<const MaskFragment> fragments,
                               const ScoreLookup& scores, const ConsolidateOptions& options = {});

struct AssessOptions {
  std::int64_t tile_size = geo::kDefaultTileSize;
  int workers = 1;
  std::int64_t min_pixels = 1;
  ConsolidationMode mode = ConsolidationMode::kScoreSum;
  // Only infer tiles whose bounds touch at least one footprint.
  bool skip_empty_tiles = false;
  std::uint64_t pixel_budget_bytes = kDefaultPixelBudgetBytes;
  // Optional externally owned budget (overrides pixel_budget_bytes).
  MemoryBudget* budget = nullptr;
};

struct RunStats {
  double wall_seconds = 0.0;
  std::int64_t tile_count = 0;
  std::int64_t tiles_processed = 0;
  std::int64_t building_count = 0;
  std::uint64_t input_bytes = 0;
  std::string backend_name;
  std::uint64_t peak_resident_bytes = 0;
};

struct RunResult {
  std::vector<BuildingAssessment> assessments;  // footprint order
  RunStats stats;
  Warnings warnings;
};

// Bytes resident per tile in flight: pixels plus the score plane.
std::uint64_t TileResidentBytes(const geo::PixelWindow& window, int bands);

// Tile → infer → rasterize → consolidate. Output order and values do not
// depend on `workers`. No partial results on failure.
RunResult AssessRun(const geo::GeoRaster& raster,
                    const std::vector<footprints::BuildingFootprint>& footprints,
                    const inference::SegmentationBackend& backend, const AssessOptions& options);

// --- class-balancing tile sampler -----------------------------------------

struct TileClassCounts {
  std::int64_t tile_col = 0;
  std::int64_t tile_row = 0;
  std::array<std::int64_t, kNumClasses> counts{};
};

struct SamplerSpec {
  std::array<double, kNumClasses> target = {0.2, 0.2, 0.2, 0.2, 0.2};
  std::vector<TileClassCounts> tiles;
  std::int64_t sample_count = 1;
  std::uint64_t seed = 0;
};

struct SampleDraw {
  std::int64_t tile_col = 0;
  std::int64_t tile_row = 0;
  std::int64_t draw_index = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const SampleDraw&, const SampleDraw&) = default;
};

// weight(tile) = sum_c count_c(tile) * target_c / global_count_c, with
// classes absent globally contributing 0.
std::vector<double> TileWeights(const SamplerSpec& spec);

// Draws with replacement, proportionally to TileWeights. Throws
// kNoSampleableTiles when every weight is zero.
std::vector<SampleDraw> WeightedTileSample(const SamplerSpec& spec);

// Labelled buildings per tile, each counted in the tile holding its
// centroid. Unlabelled and off-raster buildings are ignored.
std::vector<TileClassCounts> CountBuildingsPerTile(
    const std::vector<footprints::BuildingFootprint>& footprints, const geo::TileGrid& grid,
    const geo::GeoTransform& transform);

// JSON array of {tile_col, tile_row, draw_index, seed}.
std::string EmitSampleManifest(const std::vector<SampleDraw>& draws);

}  // namespace suas::assessment
