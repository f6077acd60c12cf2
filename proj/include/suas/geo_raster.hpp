#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "suas/warning.hpp"

namespace suas::geo {

inline constexpr std::int64_t kDefaultTileSize = 2048;

// Operationally observed imagery resolution envelope, metres per pixel.
inline constexpr double kMinOperationalGsd = 0.0165;
inline constexpr double kMaxOperationalGsd = 0.253;

struct PixelCoord {
  double col = 0.0;
  double row = 0.0;
};

struct WorldCoord {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned affine transform. Origin is the top-left corner of pixel (0,0).
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_width = 1.0;    // > 0
  double pixel_height = -1.0;  // != 0, negative for north-up

  // Throws kInvalidArgument unless pixel_width > 0 and pixel_height != 0.
  void Validate() const;

  // Transform whose pixel (0,0) is this transform's pixel (col, row).
  GeoTransform Shifted(std::int64_t col, std::int64_t row) const;

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

PixelCoord WorldToPixel(const GeoTransform& t, double x, double y);
WorldCoord PixelToWorld(const GeoTransform& t, double col, double row);

struct PixelWindow {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;

  std::int64_t area() const { return width * height; }
  bool Contains(const PixelWindow& other) const;
  friend bool operator==(const PixelWindow&, const PixelWindow&) = default;
};

// Intersection; empty (zero area) windows are returned with width/height 0.
PixelWindow Intersect(const PixelWindow& a, const PixelWindow& b);

// Abstract window reader. `out` holds window.area() * bands bytes,
// row-major, band-interleaved.
class PixelSource {
 public:
  virtual ~PixelSource() = default;
  virtual void Read(const PixelWindow& window, std::span<std::uint8_t> out) const = 0;
  // False when concurrent non-overlapping reads are unsafe; GeoRaster then
  // serialises access.
  virtual bool concurrent_reads() const { return true; }
};

class MemoryPixelSource final : public PixelSource {
 public:
  MemoryPixelSource(std::vector<std::uint8_t> pixels, std::int64_t width, int bands);
  void Read(const PixelWindow& window, std::span<std::uint8_t> out) const override;
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

 private:
  std::vector<std::uint8_t> pixels_;
  std::int64_t width_;
  int bands_;
};

class GeoRaster {
 public:
  GeoRaster(std::int64_t width, std::int64_t height, int bands, GeoTransform transform,
            std::string crs_id, std::shared_ptr<const PixelSource> source);

  static GeoRaster FromPixels(std::int64_t width, std::int64_t height, int bands,
                              GeoTransform transform, std::string crs_id,
                              std::vector<std::uint8_t> pixels);

  std::int64_t width() const { return width_; }
  std::int64_t height() const { return height_; }
  int bands() const { return bands_; }
  const GeoTransform& transform() const { return transform_; }
  const std::string& crs_id() const { return crs_id_; }
  PixelWindow extent() const { return {0, 0, width_, height_}; }
  std::uint64_t payload_bytes() const;

  // Windows must lie inside the raster (kInvalidArgument otherwise).
  void Read(const PixelWindow& window, std::span<std::uint8_t> out) const;
  std::vector<std::uint8_t> Read(const PixelWindow& window) const;

 private:
  std::int64_t width_;
  std::int64_t height_;
  int bands_;
  GeoTransform transform_;
  std::string crs_id_;
  std::shared_ptr<const PixelSource> source_;
};

struct Tile {
  std::int64_t col = 0;
  std::int64_t row = 0;
  PixelWindow window;
  GeoTransform transform;
};

// Row-major partition of a raster into tile_size squares; edge tiles keep
// their natural (smaller) size.
class TileGrid {
 public:
  TileGrid(std::int64_t width, std::int64_t height, std::int64_t tile_size,
           GeoTransform transform);

  std::int64_t tile_size() const { return tile_size_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t rows() const { return rows_; }
  std::int64_t count() const { return cols_ * rows_; }
  std::int64_t width() const { return width_; }
  std::int64_t height() const { return height_; }

  Tile At(std::int64_t col, std::int64_t row) const;
  Tile At(std::int64_t index) const { return At(index % cols_, index / cols_); }
  std::int64_t IndexOf(std::int64_t col, std::int64_t row) const { return row * cols_ + col; }

  // Tiles (row-major indices) overlapping a pixel window.
  std::vector<std::int64_t> Overlapping(const PixelWindow& window) const;

 private:
  std::int64_t width_;
  std::int64_t height_;
  std::int64_t tile_size_;
  std::int64_t cols_;
  std::int64_t rows_;
  GeoTransform transform_;
};

TileGrid MakeTileGrid(const GeoRaster& raster, std::int64_t tile_size = kDefaultTileSize);

enum class ResampleMethod { kNearest, kBilinear };

// Output dims are round(dim * input_gsd / target_gsd) per axis; the origin
// is kept. Reads the whole raster.
GeoRaster ResampleToGsd(const GeoRaster& raster, double target_gsd, ResampleMethod method);

std::int64_t ResampledDim(std::int64_t dim, double input_gsd, double target_gsd);

// Warns when either axis resolution falls outside the inclusive operational
// envelope [kMinOperationalGsd, kMaxOperationalGsd]. Never throws.
Warnings ValidateGsd(const GeoRaster& raster);

}  // namespace suas::geo
