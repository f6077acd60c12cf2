#include "suas/alignment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "suas/error.hpp"
#include "suas/evaluation.hpp"
#include "suas/simd/kernels.hpp"

namespace suas::alignment {
namespace fp = suas::footprints;

PerturbResult Perturb(const std::vector<fp::BuildingFootprint>& fps, double dx, double dy) {
  PerturbResult out;
  out.planted = {dx, dy};
  out.footprints.reserve(fps.size());
  for (const auto& f : fps) out.footprints.push_back(fp::Translate(f, dx, dy));
  return out;
}

namespace {

// Per-building search region with the data the objective reads.
struct Patch {
  std::size_t building = 0;
  geo::PixelWindow window;
  std::vector<float> planes;    // concentration: kNumClasses planes
  std::vector<float> gradient;  // mask correlation
  double gradient_mean = 0.0;
  double gradient_ss = 0.0;     // sum of squared deviations
};

void FillScorePatches(const geo::GeoRaster& raster, const inference::SegmentationBackend& backend,
                      std::int64_t tile_size, std::vector<Patch>& patches) {
  const geo::TileGrid grid = geo::MakeTileGrid(raster, tile_size);
  std::vector<std::vector<std::size_t>> by_tile(static_cast<std::size_t>(grid.count()));
  for (std::size_t p = 0; p < patches.size(); ++p) {
    patches[p].planes.assign(static_cast<std::size_t>(patches[p].window.area()) * kNumClasses, 0.0f);
    for (std::int64_t t : grid.Overlapping(patches[p].window)) by_tile[t].push_back(p);
  }
  for (std::int64_t t = 0; t < grid.count(); ++t) {
    if (by_tile[t].empty()) continue;
    const geo::Tile tile = grid.At(t);
    std::vector<std::uint8_t> pixels;
    if (backend.needs_pixels()) pixels = raster.Read(tile.window);
    const inference::ScorePlaneTile scores =
        backend.Infer({tile, raster.bands(), pixels});
    if (scores.width() != tile.window.width || scores.height() != tile.window.height) {
      throw Error(ErrorKind::kBackend, "backend returned scores with the wrong tile dims");
    }
    for (std::size_t p : by_tile[t]) {
      Patch& patch = patches[p];
      const geo::PixelWindow overlap = geo::Intersect(tile.window, patch.window);
      const std::size_t plane = static_cast<std::size_t>(patch.window.area());
      for (int c = 0; c < kNumClasses; ++c) {
        for (std::int64_t r = overlap.y; r < overlap.y + overlap.height; ++r) {
          const float* src = scores.plane(c) +
                             (r - tile.window.y) * tile.window.width + (overlap.x - tile.window.x);
          float* dst = patch.planes.data() + c * plane +
                       (r - patch.window.y) * patch.window.width + (overlap.x - patch.window.x);
          std::copy_n(src, overlap.width, dst);
        }
      }
    }
  }
}

void FillGradientPatch(const geo::GeoRaster& raster, Patch& patch) {
  const auto& kernels = simd::ActiveKernels();
  const geo::PixelWindow& w = patch.window;
  // One-pixel apron, clamped to the raster.
  const geo::PixelWindow apron = geo::Intersect({w.x - 1, w.y - 1, w.width + 2, w.height + 2},
                                                raster.extent());
  const std::vector<std::uint8_t> pixels = raster.Read(apron);
  const int bands = raster.bands();
  std::vector<float> gray(static_cast<std::size_t>(apron.area()));
  if (bands >= 3) {
    if (bands == 3) {
      kernels.rgb_to_gray(pixels.data(), gray.data(), gray.size());
    } else {
      std::vector<std::uint8_t> rgb(gray.size() * 3);
      for (std::size_t i = 0; i < gray.size(); ++i) {
        std::copy_n(pixels.data() + i * bands, 3, rgb.data() + i * 3);
      }
      kernels.rgb_to_gray(rgb.data(), gray.data(), gray.size());
    }
  } else {
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = pixels[i * bands];
  }
  // Gradient over the apron rows, then crop to the patch.
  std::vector<float> grad(gray.size());
  for (std::int64_t r = 0; r < apron.height; ++r) {
    const float* above = gray.data() + std::max<std::int64_t>(r - 1, 0) * apron.width;
    const float* row = gray.data() + r * apron.width;
    const float* below = gray.data() + std::min<std::int64_t>(r + 1, apron.height - 1) * apron.width;
    kernels.gradient_magnitude(above, row, below, grad.data() + r * apron.width,
                               static_cast<std::size_t>(apron.width));
  }
  patch.gradient.resize(static_cast<std::size_t>(w.area()));
  double sum = 0.0;
  for (std::int64_t r = 0; r < w.height; ++r) {
    for (std::int64_t c = 0; c < w.width; ++c) {
      const float g = grad[(w.y + r - apron.y) * apron.width + (w.x + c - apron.x)];
      patch.gradient[r * w.width + c] = g;
      sum += g;
    }
  }
  patch.gradient_mean = sum / static_cast<double>(w.area());
  double ss = 0.0;
  for (float g : patch.gradient) ss += (g - patch.gradient_mean) * (g - patch.gradient_mean);
  patch.gradient_ss = ss;
}

struct BuildingScore {
  double value = 0.0;
  bool valid = false;
};

BuildingScore Concentration(const Patch& patch, const fp::PixelMask& mask) {
  const std::int64_t n = mask.Count();
  if (n == 0) return {};
  const auto& kernels = simd::ActiveKernels();
  const geo::PixelWindow& w = patch.window;
  const std::size_t plane = static_cast<std::size_t>(w.area());
  assessment::ClassSums sums{};
  mask.ForEachSpan([&](std::int64_t row, std::int64_t c0, std::int64_t c1) {
    const std::size_t base = static_cast<std::size_t>((row - w.y) * w.width + (c0 - w.x));
    for (int c = 0; c < kNumClasses; ++c) {
      sums[c] += kernels.sum_f32(patch.planes.data() + c * plane + base,
                                 static_cast<std::size_t>(c1 - c0));
    }
  });
  return {*std::max_element(sums.begin(), sums.end()) / static_cast<double>(n), true};
}

BuildingScore MaskCorrelation(const Patch& patch, const fp::PixelMask& mask) {
  if (mask.Empty() || patch.gradient_ss <= 0.0) return {};
  const geo::PixelWindow& w = patch.window;
  // Inner boundary: covered pixels with an uncovered 4-neighbour.
  std::vector<std::uint8_t> boundary(static_cast<std::size_t>(w.area()), 0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < w.height; ++r) {
    for (std::int64_t c = 0; c < w.width; ++c) {
      const std::int64_t x = w.x + c;
      const std::int64_t y = w.y + r;
      if (!mask.Test(x, y)) continue;
      if (!mask.Test(x - 1, y) || !mask.Test(x + 1, y) || !mask.Test(x, y - 1) || !mask.Test(x, y + 1)) {
        boundary[r * w.width + c] = 1;
        ++count;
      }
    }
  }
  const double n = static_cast<double>(w.area());
  const double mean_b = static_cast<double>(count) / n;
  const double ss_b = static_cast<double>(count) * (1.0 - mean_b) * (1.0 - mean_b) +
                      (n - static_cast<double>(count)) * mean_b * mean_b;
  if (ss_b <= 0.0) return {};
  double cross = 0.0;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    cross += (boundary[i] - mean_b) * (patch.gradient[i] - patch.gradient_mean);
  }
  return {cross / std::sqrt(ss_b * patch.gradient_ss), true};
}

// Strict "a is better than b" under value-then-tie rule.
bool Better(const SurfacePoint& a, const SurfacePoint& b) {
  if (a.has_signal != b.has_signal) return a.has_signal;
  if (a.value != b.value) return a.value > b.value;
  const int na = a.ix * a.ix + a.iy * a.iy;
  const int nb = b.ix * b.ix + b.iy * b.iy;
  if (na != nb) return na < nb;
  if (a.ix != b.ix) return a.ix < b.ix;
  return a.iy < b.iy;
}

}  // namespace

AlignmentResult SearchAlignment(const geo::GeoRaster& raster,
                                const std::vector<fp::BuildingFootprint>& fps,
                                const AlignmentSearchSpec& spec) {
  if (!(spec.step > 0.0) || !std::isfinite(spec.step)) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("step must be > 0, got {}", spec.step));
  }
  if (!(spec.window >= spec.step) || !std::isfinite(spec.window)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("window ({}) must be >= step ({})", spec.window, spec.step));
  }
  if (spec.objective == Objective::kConcentration && spec.backend == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "concentration objective needs a backend");
  }
  if (spec.workers < 1) throw Error(ErrorKind::kInvalidArgument, "workers must be >= 1");
  const int n = static_cast<int>(std::floor(spec.window / spec.step + 1e-9));
  const geo::GeoTransform& t = raster.transform();
  const double min_gsd = std::min(t.pixel_width, std::abs(t.pixel_height));
  const auto margin = static_cast<std::int64_t>(std::ceil(n * spec.step / min_gsd)) + 2;

  std::vector<Patch> patches;
  for (std::size_t i = 0; i < fps.size(); ++i) {
    const geo::PixelWindow b = fp::PixelBounds(fps[i], t);
    const geo::PixelWindow grown{b.x - margin, b.y - margin, b.width + 2 * margin, b.height + 2 * margin};
    const geo::PixelWindow w = geo::Intersect(grown, raster.extent());
    if (w.area() == 0) continue;
    Patch p;
    p.building = i;
    p.window = w;
    patches.push_back(std::move(p));
  }
  if (patches.empty()) {
    throw Error(ErrorKind::kNoSignal, "no footprint overlaps the raster at any searched offset");
  }
  if (spec.objective == Objective::kConcentration) {
    FillScorePatches(raster, *spec.backend, spec.tile_size, patches);
  } else {
    for (Patch& p : patches) FillGradientPatch(raster, p);
  }

  const int side = 2 * n + 1;
  std::vector<SurfacePoint> surface(static_cast<std::size_t>(side) * side);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int k = next++; k < side * side; k = next++) {
      try {
        SurfacePoint& pt = surface[k];
        pt.iy = k / side - n;
        pt.ix = k % side - n;
        pt.dx = pt.ix * spec.step;
        pt.dy = pt.iy * spec.step;
        double sum = 0.0;
        int count = 0;
        for (const Patch& patch : patches) {
          const fp::BuildingFootprint moved = fp::Translate(fps[patch.building], pt.dx, pt.dy);
          const fp::PixelMask mask = fp::Rasterize(moved, t, patch.window);
          const BuildingScore s = spec.objective == Objective::kConcentration
                                      ? Concentration(patch, mask)
                                      : MaskCorrelation(patch, mask);
          if (s.valid) {
            sum += s.value;
            ++count;
          }
        }
        pt.has_signal = count > 0;
        pt.value = count > 0 ? sum / count : 0.0;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    for (int w = 1; w < std::min(spec.workers, side * side); ++w) threads.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  const SurfacePoint* best = &surface.front();
  for (const SurfacePoint& pt : surface) {
    if (Better(pt, *best)) best = &pt;
  }
  if (!best->has_signal) {
    throw Error(ErrorKind::kNoSignal, "no footprint overlaps the raster at any searched offset");
  }
  AlignmentResult result;
  result.best_offset = {best->dx, best->dy};
  result.best_ix = best->ix;
  result.best_iy = best->iy;
  result.objective_value = best->value;
  result.steps_per_side = n;
  if (spec.retain_surface) result.surface = std::move(surface);
  return result;
}

std::vector<DegradationRow> DegradationReport(const geo::GeoRaster& raster,
                                              const std::vector<fp::BuildingFootprint>& truth,
                                              const inference::SegmentationBackend& backend,
                                              const std::vector<fp::Offset>& offsets,
                                              const assessment::AssessOptions& options) {
  auto f1_at = [&](const fp::Offset& o) {
    const PerturbResult moved = Perturb(truth, o.dx, o.dy);
    const auto run = assessment::AssessRun(raster, moved.footprints, backend, options);
    return evaluation::EvaluateRun(run.assessments, truth, evaluation::AlignmentMode::kUnaligned)
        .macro_f1;
  };
  const double reference = f1_at({0.0, 0.0});
  std::vector<DegradationRow> rows;
  rows.reserve(offsets.size());
  for (const fp::Offset& o : offsets) {
    const double f1 = (o.dx == 0.0 && o.dy == 0.0) ? reference : f1_at(o);
    rows.push_back({o, f1, reference > 0.0 ? (reference - f1) / reference : 0.0});
  }
  return rows;
}

nlohmann::ordered_json ToJson(const AlignmentResult& result, bool include_surface) {
  nlohmann::ordered_json out;
  out["best_offset"] = {result.best_offset.dx, result.best_offset.dy};
  out["best_index"] = {result.best_ix, result.best_iy};
  out["objective_value"] = result.objective_value;
  out["steps_per_side"] = result.steps_per_side;
  if (include_surface) {
    nlohmann::ordered_json surface = nlohmann::ordered_json::array();
    for (const SurfacePoint& pt : result.surface) {
      nlohmann::ordered_json p;
      p["dx"] = pt.dx;
      p["dy"] = pt.dy;
      p["value"] = pt.has_signal ? nlohmann::ordered_json(pt.value) : nlohmann::ordered_json(nullptr);
      surface.push_back(std::move(p));
    }
    out["surface"] = std::move(surface);
  }
  return out;
}

}  // namespace suas::alignment
