#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "suas/assessment.hpp"
#include "suas/footprints.hpp"
#include "suas/geo_raster.hpp"
#include "suas/inference.hpp"

namespace suas::alignment {

struct PerturbResult {
  std::vector<footprints::BuildingFootprint> footprints;
  footprints::Offset planted;
};

// Translates every footprint by (dx, dy), simulating a misregistration.
PerturbResult Perturb(const std::vector<footprints::BuildingFootprint>& fps, double dx, double dy);

enum class Objective {
  // Mean over buildings of max_c(sum of class-c scores under mask) / pixels.
  kConcentration,
  // Mean over buildings of the normalised cross-correlation between the
  // translated mask's boundary and the image gradient magnitude.
  kMaskCorrelation,
};

struct AlignmentSearchSpec {
  double window = 0.5;  // metres, +/- per axis
  double step = 0.1;    // metres
  Objective objective = Objective::kConcentration;
  const inference::SegmentationBackend* backend = nullptr;  // required for kConcentration
  bool retain_surface = false;
  std::int64_t tile_size = geo::kDefaultTileSize;
  int workers = 1;
};

struct SurfacePoint {
  int ix = 0;  // offset = (ix * step, iy * step)
  int iy = 0;
  double dx = 0.0;
  double dy = 0.0;
  double value = 0.0;
  bool has_signal = false;
};

struct AlignmentResult {
  footprints::Offset best_offset;
  int best_ix = 0;
  int best_iy = 0;
  double objective_value = 0.0;
  int steps_per_side = 0;
  std::vector<SurfacePoint> surface;  // row-major in (iy, ix) when retained
};

// Exhaustive grid search over offsets in [-window, window]^2. Ties go to the
// smallest |offset|, then the smallest dx, then the smallest dy. Throws
// kNoSignal when no footprint overlaps the raster at any offset.
AlignmentResult SearchAlignment(const geo::GeoRaster& raster,
                                const std::vector<footprints::BuildingFootprint>& fps,
                                const AlignmentSearchSpec& spec);

struct DegradationRow {
  footprints::Offset offset;
  double macro_f1 = 0.0;
  double relative_drop = 0.0;  // (F1_0 - F1) / F1_0, 0 when F1_0 == 0
};

// Assess + evaluate with all footprints shifted by each offset; the
// reference F1_0 is the unshifted run. Pooled over the whole run.
std::vector<DegradationRow> DegradationReport(
    const geo::GeoRaster& raster, const std::vector<footprints::BuildingFootprint>& truth,
    const inference::SegmentationBackend& backend, const std::vector<footprints::Offset>& offsets,
    const assessment::AssessOptions& options = {});

nlohmann::ordered_json ToJson(const AlignmentResult& result, bool include_surface);

}  // namespace suas::alignment
