#include "suas/assessment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "suas/error.hpp"
#include "suas/simd/kernels.hpp"

namespace suas::assessment {

namespace {
constexpr std::array<std::pair<Flag, std::string_view>, 3> kFlagNames = {{
    {kLowCoverage, "low_coverage"},
    {kOffRaster, "off_raster"},
    {kTieBroken, "tie_broken"},
}};
}  // namespace

std::vector<std::string> FlagNames(std::uint8_t flags) {
  std::vector<std::string> out;
  for (const auto& [flag, name] : kFlagNames) {
    if ((flags & flag) != 0) out.emplace_back(name);
  }
  return out;
}

std::uint8_t ParseFlag(std::string_view name) {
  for (const auto& [flag, n] : kFlagNames) {
    if (n == name) return flag;
  }
  return 0;
}

DamageClass ArgmaxWithTieRule(const ClassSums& sums, bool* tied) {
  DamageClass best = DamageClass::kUnClassified;
  double best_value = sums[Ordinal(best)];
  int ties = 1;
  for (DamageClass c : kAllClasses) {
    if (c == DamageClass::kUnClassified) continue;
    const double v = sums[Ordinal(c)];
    if (v > best_value) {
      best = c;
      best_value = v;
      ties = 1;
    } else if (v == best_value) {
      ++ties;
      if (SeverityRank(c) > SeverityRank(best)) best = c;
    }
  }
  if (tied != nullptr) *tied = ties > 1;
  return best;
}

void Accumulator::Merge(const Accumulator& other) {
  for (int c = 0; c < kNumClasses; ++c) sums[c] += other.sums[c];
  pixel_count += other.pixel_count;
}

void Accumulate(const footprints::PixelMask& mask, const geo::Tile& tile,
                const inference::ScorePlaneTile& scores, ConsolidationMode mode, Accumulator& acc) {
  if (!tile.window.Contains(mask.window()) && mask.window().area() > 0) {
    throw Error(ErrorKind::kInvalidArgument, "mask fragment extends beyond its tile");
  }
  if (scores.width() != tile.window.width || scores.height() != tile.window.height) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("score tile ({}, {}) is {}x{}, tile window is {}x{}", tile.col, tile.row,
                            scores.width(), scores.height(), tile.window.width, tile.window.height));
  }
  const auto& kernels = simd::ActiveKernels();
  mask.ForEachSpan([&](std::int64_t row, std::int64_t c0, std::int64_t c1) {
    const std::size_t base = static_cast<std::size_t>(row - tile.window.y) * scores.width() +
                             static_cast<std::size_t>(c0 - tile.window.x);
    const auto n = static_cast<std::size_t>(c1 - c0);
    acc.pixel_count += c1 - c0;
    if (mode == ConsolidationMode::kScoreSum) {
      for (int c = 0; c < kNumClasses; ++c) acc.sums[c] += kernels.sum_f32(scores.plane(c) + base, n);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        ClassSums px;
        for (int c = 0; c < kNumClasses; ++c) px[c] = scores.plane(c)[base + i];
        acc.sums[Ordinal(ArgmaxWithTieRule(px))] += 1.0;
      }
    }
  });
}

BuildingAssessment Finalize(std::string building_id, const Accumulator& acc,
                            std::int64_t min_pixels) {
  BuildingAssessment out;
  out.building_id = std::move(building_id);
  out.class_sums = acc.sums;
  out.pixel_count = acc.pixel_count;
  if (acc.pixel_count == 0) {
    out.flags |= kOffRaster;
    out.predicted = DamageClass::kUnClassified;
    if (min_pixels > 0) out.flags |= kLowCoverage;
    return out;
  }
  bool tied = false;
  out.predicted = ArgmaxWithTieRule(acc.sums, &tied);
  if (tied) out.flags |= kTieBroken;
  if (acc.pixel_count < min_pixels) out.flags |= kLowCoverage;
  return out;
}

BuildingAssessment Consolidate(std::string building_id, std::span<const MaskFragment> fragments,
                               const ScoreLookup& scores, const ConsolidateOptions& options) {
  Accumulator acc;
  for (const MaskFragment& fragment : fragments) {
    if (fragment.mask.Empty()) continue;
    const inference::ScorePlaneTile* tile = scores(fragment.tile.col, fragment.tile.row);
    if (tile == nullptr) {
      throw Error(ErrorKind::kMissingScores,
                  fmt::format("building '{}' has pixels in tile ({}, {}) but no scores exist for it",
                              building_id, fragment.tile.col, fragment.tile.row));
    }
    Accumulate(fragment.mask, fragment.tile, *tile, options.mode, acc);
  }
  return Finalize(std::move(building_id), acc, options.min_pixels);
}

std::uint64_t TileResidentBytes(const geo::PixelWindow& window, int bands) {
  const auto area = static_cast<std::uint64_t>(window.area());
  return area * static_cast<std::uint64_t>(bands) + area * kNumClasses * sizeof(float);
}

RunResult AssessRun(const geo::GeoRaster& raster,
                    const std::vector<footprints::BuildingFootprint>& fps,
                    const inference::SegmentationBackend& backend, const AssessOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  if (options.workers < 1) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("workers must be >= 1, got {}", options.workers));
  }
  if (options.min_pixels < 0) throw Error(ErrorKind::kInvalidArgument, "min_pixels must be >= 0");
  const geo::TileGrid grid = geo::MakeTileGrid(raster, options.tile_size);
  const geo::GeoTransform& transform = raster.transform();

  std::vector<geo::PixelWindow> bounds;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(grid.count()));
  bounds.reserve(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    bounds.push_back(footprints::PixelBounds(fps[i], transform));
    for (std::int64_t t : grid.Overlapping(bounds.back())) members[t].push_back(i);
  }

  std::optional<MemoryBudget> owned_budget;
  MemoryBudget* budget = options.budget;
  if (budget == nullptr) budget = &owned_budget.emplace(options.pixel_budget_bytes);

  struct Partial {
    std::size_t building;
    Accumulator acc;
  };
  std::vector<std::vector<Partial>> partials(static_cast<std::size_t>(grid.count()));
  std::vector<Warnings> tile_warnings(static_cast<std::size_t>(grid.count()));
  std::atomic<std::int64_t> next{0};
  std::atomic<std::uint64_t> input_bytes{0};
  std::atomic<std::int64_t> processed{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::mutex backend_mutex;

  auto rasterize_members = [&](const geo::Tile& tile, std::size_t idx, Warnings& warnings) {
    std::vector<std::pair<std::size_t, footprints::PixelMask>> masks;
    for (std::size_t i : members[idx]) {
      const geo::PixelWindow window = geo::Intersect(tile.window, bounds[i]);
      footprints::PixelMask mask = footprints::Rasterize(fps[i], transform, window, &warnings);
      if (!mask.Empty()) masks.emplace_back(i, std::move(mask));
    }
    return masks;
  };

  auto worker = [&] {
    while (!failed.load()) {
      const std::int64_t idx = next.fetch_add(1);
      if (idx >= grid.count()) break;
      const auto uidx = static_cast<std::size_t>(idx);
      if (options.skip_empty_tiles && members[uidx].empty()) continue;
      try {
        const geo::Tile tile = grid.At(idx);
        BudgetLease lease(*budget, TileResidentBytes(tile.window, raster.bands()));
        std::vector<std::uint8_t> pixels;
        if (backend.needs_pixels()) {
          pixels = raster.Read(tile.window);
          input_bytes += pixels.size();
        }
        inference::TileInput input{tile, raster.bands(), pixels};
        std::optional<inference::ScorePlaneTile> scores;
        try {
          if (backend.thread_safe()) {
            scores = backend.Infer(input);
          } else {
            std::lock_guard lock(backend_mutex);
            scores = backend.Infer(input);
          }
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kMissingScores) throw;
          // Missing scores only matter where some building has pixels.
          if (!rasterize_members(tile, uidx, tile_warnings[uidx]).empty()) throw;
          tile_warnings[uidx].push_back({"missing-scores", e.detail()});
          ++processed;
          continue;
        }
        pixels = {};
        if (scores->width() != tile.window.width || scores->height() != tile.window.height) {
          throw Error(ErrorKind::kBackend,
                      fmt::format("backend '{}' returned {}x{} scores for a {}x{} tile", backend.name(),
                                  scores->width(), scores->height(), tile.window.width,
                                  tile.window.height));
        }
        for (auto& [i, mask] : rasterize_members(tile, uidx, tile_warnings[uidx])) {
          Accumulator acc;
          Accumulate(mask, tile, *scores, options.mode, acc);
          partials[uidx].push_back({i, acc});
        }
        ++processed;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };

  {
    std::vector<std::jthread> threads;
    const int n = static_cast<int>(std::min<std::int64_t>(options.workers, std::max<std::int64_t>(grid.count(), 1)));
    for (int t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  // Fixed reduction order: tiles ascending, members in footprint order.
  std::vector<Accumulator> totals(fps.size());
  RunResult result;
  for (std::size_t t = 0; t < partials.size(); ++t) {
    for (const Partial& p : partials[t]) totals[p.building].Merge(p.acc);
    for (Warning& w : tile_warnings[t]) result.warnings.push_back(std::move(w));
  }
  result.assessments.reserve(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    result.assessments.push_back(Finalize(fps[i].id, totals[i], options.min_pixels));
  }
  // Zero-area warnings repeat once per touched tile; keep the first.
  std::sort(result.warnings.begin(), result.warnings.end(), [](const Warning& a, const Warning& b) {
    return std::tie(a.code, a.message) < std::tie(b.code, b.message);
  });
  result.warnings.erase(std::unique(result.warnings.begin(), result.warnings.end(),
                                    [](const Warning& a, const Warning& b) {
                                      return a.code == b.code && a.message == b.message;
                                    }),
                        result.warnings.end());

  RunStats& stats = result.stats;
  stats.tile_count = grid.count();
  stats.tiles_processed = processed.load();
  stats.building_count = static_cast<std::int64_t>(fps.size());
  stats.input_bytes = input_bytes.load();
  stats.backend_name = backend.name();
  stats.peak_resident_bytes = budget->peak();
  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// --- sampler ---------------------------------------------------------------

namespace {

void ValidateSpec(const SamplerSpec& spec) {
  double total = 0.0;
  for (double w : spec.target) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorKind::kInvalidArgument, "target weights must be finite and >= 0");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("target weights sum to {}, not 1", total));
  }
  if (spec.sample_count < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("sample_count must be >= 1, got {}", spec.sample_count));
  }
  for (const auto& t : spec.tiles) {
    for (std::int64_t n : t.counts) {
      if (n < 0) throw Error(ErrorKind::kInvalidArgument, "per-tile class counts must be >= 0");
    }
  }
}

}  // namespace

std::vector<double> TileWeights(const SamplerSpec& spec) {
  ValidateSpec(spec);
  std::array<std::int64_t, kNumClasses> global{};
  for (const auto& t : spec.tiles) {
    for (int c = 0; c < kNumClasses; ++c) global[c] += t.counts[c];
  }
  std::vector<double> weights;
  weights.reserve(spec.tiles.size());
  for (const auto& t : spec.tiles) {
    double w = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      if (global[c] > 0) {
        w += static_cast<double>(t.counts[c]) * spec.target[c] / static_cast<double>(global[c]);
      }
    }
    weights.push_back(w);
  }
  return weights;
}

std::vector<SampleDraw> WeightedTileSample(const SamplerSpec& spec) {
  const std::vector<double> weights = TileWeights(spec);
  std::vector<double> cumulative;
  cumulative.reserve(weights.size());
  double total = 0.0;
  for (double w : weights) {
    total += w;
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::kNoSampleableTiles, "no tile contains a labelled building of a targeted class");
  }
  // mt19937_64 output is specified exactly by the standard; the mapping to
  // [0, 1) is done here so draws are identical across standard libraries.
  std::mt19937_64 gen(spec.seed);
  std::vector<SampleDraw> draws;
  draws.reserve(static_cast<std::size_t>(spec.sample_count));
  for (std::int64_t i = 0; i < spec.sample_count; ++i) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    const double target = u * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto& tile = spec.tiles[static_cast<std::size_t>(it - cumulative.begin())];
    draws.push_back({tile.tile_col, tile.tile_row, i, spec.seed});
  }
  return draws;
}

std::vector<TileClassCounts> CountBuildingsPerTile(
    const std::vector<footprints::BuildingFootprint>& fps, const geo::TileGrid& grid,
    const geo::GeoTransform& transform) {
  std::vector<TileClassCounts> tiles(static_cast<std::size_t>(grid.count()));
  for (std::int64_t i = 0; i < grid.count(); ++i) {
    tiles[i].tile_col = i % grid.cols();
    tiles[i].tile_row = i / grid.cols();
  }
  for (const auto& f : fps) {
    if (!f.truth_label) continue;
    // Area-weighted centroid of the exterior ring; vertex mean if degenerate.
    // Taken relative to the first vertex so projected coordinates do not cancel.
    const footprints::Point o = f.exterior.front();
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t k = 0; k + 1 < f.exterior.size(); ++k) {
      const double px = f.exterior[k].x - o.x, py = f.exterior[k].y - o.y;
      const double qx = f.exterior[k + 1].x - o.x, qy = f.exterior[k + 1].y - o.y;
      const double cross = px * qy - qx * py;
      a += cross;
      cx += (px + qx) * cross;
      cy += (py + qy) * cross;
    }
    if (a != 0.0) {
      cx = o.x + cx / (3.0 * a);
      cy = o.y + cy / (3.0 * a);
    } else {
      cx = cy = 0.0;
      const std::size_t n = f.exterior.size() - 1;
      for (std::size_t k = 0; k < n; ++k) {
        cx += f.exterior[k].x / static_cast<double>(n);
        cy += f.exterior[k].y / static_cast<double>(n);
      }
    }
    const geo::PixelCoord pc = geo::WorldToPixel(transform, cx, cy);
    const auto col = static_cast<std::int64_t>(std::floor(pc.col));
    const auto row = static_cast<std::int64_t>(std::floor(pc.row));
    if (col < 0 || row < 0 || col >= grid.width() || row >= grid.height()) continue;
    const std::int64_t idx = grid.IndexOf(col / grid.tile_size(), row / grid.tile_size());
    ++tiles[idx].counts[Ordinal(*f.truth_label)];
  }
  return tiles;
}

std::string EmitSampleManifest(const std::vector<SampleDraw>& draws) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const SampleDraw& d : draws) {
    nlohmann::ordered_json entry;
    entry["tile_col"] = d.tile_col;
    entry["tile_row"] = d.tile_row;
    entry["draw_index"] = d.draw_index;
    entry["seed"] = d.seed;
    out.push_back(std::move(entry));
  }
  return out.dump(2) + "\n";
}

}  // namespace suas::assessment
