#include "suas/geo_raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

#include <fmt/format.h>

#include "suas/error.hpp"

namespace suas::geo {

void GeoTransform::Validate() const {
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw Error(ErrorKind::kInvalidArgument, "geotransform origin must be finite");
  }
  if (!(pixel_width > 0.0) || !std::isfinite(pixel_width)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("pixel_width must be > 0, got {}", pixel_width));
  }
  if (pixel_height == 0.0 || !std::isfinite(pixel_height)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("pixel_height must be non-zero, got {}", pixel_height));
  }
}

GeoTransform GeoTransform::Shifted(std::int64_t col, std::int64_t row) const {
  const WorldCoord corner = PixelToWorld(*this, static_cast<double>(col), static_cast<double>(row));
  return {corner.x, corner.y, pixel_width, pixel_height};
}

PixelCoord WorldToPixel(const GeoTransform& t, double x, double y) {
  return {(x - t.origin_x) / t.pixel_width, (y - t.origin_y) / t.pixel_height};
}

WorldCoord PixelToWorld(const GeoTransform& t, double col, double row) {
  return {t.origin_x + col * t.pixel_width, t.origin_y + row * t.pixel_height};
}

bool PixelWindow::Contains(const PixelWindow& other) const {
  return other.x >= x && other.y >= y && other.x + other.width <= x + width &&
         other.y + other.height <= y + height;
}

PixelWindow Intersect(const PixelWindow& a, const PixelWindow& b) {
  const std::int64_t x0 = std::max(a.x, b.x);
  const std::int64_t y0 = std::max(a.y, b.y);
  const std::int64_t x1 = std::min(a.x + a.width, b.x + b.width);
  const std::int64_t y1 = std::min(a.y + a.height, b.y + b.height);
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

MemoryPixelSource::MemoryPixelSource(std::vector<std::uint8_t> pixels, std::int64_t width,
                                     int bands)
    : pixels_(std::move(pixels)), width_(width), bands_(bands) {}

void MemoryPixelSource::Read(const PixelWindow& window, std::span<std::uint8_t> out) const {
  const std::size_t row_bytes = static_cast<std::size_t>(window.width) * bands_;
  for (std::int64_t r = 0; r < window.height; ++r) {
    const std::size_t src =
        (static_cast<std::size_t>(window.y + r) * width_ + window.x) * bands_;
    std::memcpy(out.data() + r * row_bytes, pixels_.data() + src, row_bytes);
  }
}

namespace {

class SerializingSource final : public PixelSource {
 public:
  explicit SerializingSource(std::shared_ptr<const PixelSource> inner) : inner_(std::move(inner)) {}
  void Read(const PixelWindow& window, std::span<std::uint8_t> out) const override {
    std::lock_guard lock(mutex_);
    inner_->Read(window, out);
  }

 private:
  std::shared_ptr<const PixelSource> inner_;
  mutable std::mutex mutex_;
};

}  // namespace

GeoRaster::GeoRaster(std::int64_t width, std::int64_t height, int bands, GeoTransform transform,
                     std::string crs_id, std::shared_ptr<const PixelSource> source)
    : width_(width),
      height_(height),
      bands_(bands),
      transform_(transform),
      crs_id_(std::move(crs_id)),
      source_(std::move(source)) {
  if (width_ < 1 || height_ < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("raster dims must be >= 1, got {}x{}", width_, height_));
  }
  if (bands_ < 1) throw Error(ErrorKind::kInvalidArgument, "raster needs at least one band");
  if (!source_) throw Error(ErrorKind::kInvalidArgument, "raster has no pixel source");
  transform_.Validate();
  if (!source_->concurrent_reads()) {
    source_ = std::make_shared<SerializingSource>(std::move(source_));
  }
}

GeoRaster GeoRaster::FromPixels(std::int64_t width, std::int64_t height, int bands,
                                GeoTransform transform, std::string crs_id,
                                std::vector<std::uint8_t> pixels) {
  if (static_cast<std::int64_t>(pixels.size()) != width * height * bands) {
    throw Error(ErrorKind::kLength,
                fmt::format("pixel buffer holds {} bytes, expected {}", pixels.size(),
                            width * height * bands));
  }
  auto source = std::make_shared<MemoryPixelSource>(std::move(pixels), width, bands);
  return GeoRaster(width, height, bands, transform, std::move(crs_id), std::move(source));
}

std::uint64_t GeoRaster::payload_bytes() const {
  return static_cast<std::uint64_t>(width_) * static_cast<std::uint64_t>(height_) *
         static_cast<std::uint64_t>(bands_);
}

void GeoRaster::Read(const PixelWindow& window, std::span<std::uint8_t> out) const {
  if (window.width < 1 || window.height < 1 || !extent().Contains(window)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("window ({},{} {}x{}) is outside the {}x{} raster", window.x,
                            window.y, window.width, window.height, width_, height_));
  }
  if (out.size() != static_cast<std::size_t>(window.area()) * bands_) {
    throw Error(ErrorKind::kInvalidArgument, "window buffer size mismatch");
  }
  source_->Read(window, out);
}

std::vector<std::uint8_t> GeoRaster::Read(const PixelWindow& window) const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(std::max<std::int64_t>(window.area(), 0)) *
                                bands_);
  Read(window, out);
  return out;
}

TileGrid::TileGrid(std::int64_t width, std::int64_t height, std::int64_t tile_size,
                   GeoTransform transform)
    : width_(width), height_(height), tile_size_(tile_size), transform_(transform) {
  if (tile_size_ < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("tile size must be >= 1, got {}", tile_size_));
  }
  cols_ = (width_ + tile_size_ - 1) / tile_size_;
  rows_ = (height_ + tile_size_ - 1) / tile_size_;
}

Tile TileGrid::At(std::int64_t col, std::int64_t row) const {
  const std::int64_t x = col * tile_size_;
  const std::int64_t y = row * tile_size_;
  const PixelWindow window{x, y, std::min(tile_size_, width_ - x), std::min(tile_size_, height_ - y)};
  return {col, row, window, transform_.Shifted(x, y)};
}

std::vector<std::int64_t> TileGrid::Overlapping(const PixelWindow& window) const {
  std::vector<std::int64_t> out;
  const PixelWindow clipped = Intersect(window, {0, 0, width_, height_});
  if (clipped.area() == 0) return out;
  const std::int64_t c0 = clipped.x / tile_size_;
  const std::int64_t c1 = (clipped.x + clipped.width - 1) / tile_size_;
  const std::int64_t r0 = clipped.y / tile_size_;
  const std::int64_t r1 = (clipped.y + clipped.height - 1) / tile_size_;
  for (std::int64_t r = r0; r <= r1; ++r) {
    for (std::int64_t c = c0; c <= c1; ++c) out.push_back(IndexOf(c, r));
  }
  return out;
}

TileGrid MakeTileGrid(const GeoRaster& raster, std::int64_t tile_size) {
  return TileGrid(raster.width(), raster.height(), tile_size, raster.transform());
}

std::int64_t ResampledDim(std::int64_t dim, double input_gsd, double target_gsd) {
  return std::llround(static_cast<double>(dim) * input_gsd / target_gsd);
}

namespace {

// Source coordinate of an output pixel centre, in input pixel units.
double SourceCenter(std::int64_t i, double ratio) { return (static_cast<double>(i) + 0.5) * ratio; }

std::int64_t ClampIndex(std::int64_t i, std::int64_t dim) {
  return std::clamp<std::int64_t>(i, 0, dim - 1);
}

}  // namespace

GeoRaster ResampleToGsd(const GeoRaster& raster, double target_gsd, ResampleMethod method) {
  if (!(target_gsd > 0.0) || !std::isfinite(target_gsd)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("target GSD must be > 0, got {}", target_gsd));
  }
  const GeoTransform& in = raster.transform();
  const double gsd_x = in.pixel_width;
  const double gsd_y = std::abs(in.pixel_height);
  const std::int64_t out_w = ResampledDim(raster.width(), gsd_x, target_gsd);
  const std::int64_t out_h = ResampledDim(raster.height(), gsd_y, target_gsd);
  if (out_w < 1 || out_h < 1) {
    throw Error(ErrorKind::kDegenerateOutput,
                fmt::format("resampling {}x{} to {} m/px yields {}x{}", raster.width(),
                            raster.height(), target_gsd, out_w, out_h));
  }
  const int bands = raster.bands();
  const std::vector<std::uint8_t> src = raster.Read(raster.extent());
  const std::int64_t in_w = raster.width();
  const std::int64_t in_h = raster.height();
  const double ratio_x = target_gsd / gsd_x;
  const double ratio_y = target_gsd / gsd_y;

  std::vector<std::uint8_t> dst(static_cast<std::size_t>(out_w * out_h) * bands);
  auto sample = [&](std::int64_t x, std::int64_t y, int b) -> double {
    return src[(static_cast<std::size_t>(y) * in_w + x) * bands + b];
  };

  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const double sy = SourceCenter(oy, ratio_y);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const double sx = SourceCenter(ox, ratio_x);
      std::uint8_t* px = &dst[(static_cast<std::size_t>(oy) * out_w + ox) * bands];
      if (method == ResampleMethod::kNearest) {
        const std::int64_t ix = ClampIndex(static_cast<std::int64_t>(std::floor(sx)), in_w);
        const std::int64_t iy = ClampIndex(static_cast<std::int64_t>(std::floor(sy)), in_h);
        for (int b = 0; b < bands; ++b) px[b] = static_cast<std::uint8_t>(sample(ix, iy, b));
      } else {
        const double fx = sx - 0.5;
        const double fy = sy - 0.5;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double tx = fx - static_cast<double>(x0);
        const double ty = fy - static_cast<double>(y0);
        const std::int64_t xa = ClampIndex(x0, in_w);
        const std::int64_t xb = ClampIndex(x0 + 1, in_w);
        const std::int64_t ya = ClampIndex(y0, in_h);
        const std::int64_t yb = ClampIndex(y0 + 1, in_h);
        for (int b = 0; b < bands; ++b) {
          const double top = sample(xa, ya, b) * (1.0 - tx) + sample(xb, ya, b) * tx;
          const double bottom = sample(xa, yb, b) * (1.0 - tx) + sample(xb, yb, b) * tx;
          const double v = top * (1.0 - ty) + bottom * ty;
          px[b] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
        }
      }
    }
  }
  GeoTransform out_t{in.origin_x, in.origin_y, target_gsd,
                     in.pixel_height < 0 ? -target_gsd : target_gsd};
  return GeoRaster::FromPixels(out_w, out_h, bands, out_t, raster.crs_id(), std::move(dst));
}

Warnings ValidateGsd(const GeoRaster& raster) {
  const double gx = raster.transform().pixel_width;
  const double gy = std::abs(raster.transform().pixel_height);
  const auto outside = [](double g) { return g < kMinOperationalGsd || g > kMaxOperationalGsd; };
  if (!outside(gx) && !outside(gy)) return {};
  return {{"gsd-out-of-envelope",
           fmt::format("resolution {} x {} m/px is outside the operational envelope [{}, {}]", gx,
                       gy, kMinOperationalGsd, kMaxOperationalGsd)}};
}

}  // namespace suas::geo
