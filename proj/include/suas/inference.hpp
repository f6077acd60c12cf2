#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "suas/footprints.hpp"
#include "suas/geo_raster.hpp"

namespace suas::inference {

// Dense per-tile, per-class, per-pixel scores; class-major then row-major.
class ScorePlaneTile {
 public:
  ScorePlaneTile() = default;
  ScorePlaneTile(std::uint32_t tile_col, std::uint32_t tile_row, std::uint32_t width,
                 std::uint32_t height);

  std::uint32_t tile_col() const { return tile_col_; }
  std::uint32_t tile_row() const { return tile_row_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  static constexpr std::uint32_t num_classes() { return kNumClasses; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  std::uint64_t byte_size() const { return scores_.size() * sizeof(float); }

  float* plane(int cls) { return scores_.data() + cls * plane_size(); }
  const float* plane(int cls) const { return scores_.data() + cls * plane_size(); }
  float& at(int cls, std::uint32_t row, std::uint32_t col) {
    return plane(cls)[static_cast<std::size_t>(row) * width_ + col];
  }
  float at(int cls, std::uint32_t row, std::uint32_t col) const {
    return plane(cls)[static_cast<std::size_t>(row) * width_ + col];
  }
  std::span<float> scores() { return scores_; }
  std::span<const float> scores() const { return scores_; }

  // Throws kFormat unless every score is finite and >= 0.
  void Validate() const;

  // Bitwise equality (distinguishes -0.0, compares NaN payloads).
  friend bool operator==(const ScorePlaneTile& a, const ScorePlaneTile& b);

 private:
  std::uint32_t tile_col_ = 0;
  std::uint32_t tile_row_ = 0;
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<float> scores_;
};

struct TileInput {
  geo::Tile tile;
  int bands = 3;
  std::span<const std::uint8_t> pixels;  // tile.window.area() * bands bytes
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual std::string name() const = 0;
  virtual bool deterministic() const { return true; }
  // False when Infer must not be called concurrently.
  virtual bool thread_safe() const { return true; }
  // Whether the pipeline must stream imagery into Infer. The reference
  // backends stand in for models and say yes; score-file replay says no.
  virtual bool needs_pixels() const { return true; }
  virtual ScorePlaneTile Infer(const TileInput& input) const = 0;
};

// One-hot ground-truth replay: pixels under a labelled footprint score 1.0 in
// its class, everything else 1.0 in no_damage. Overlaps go to the more
// severe class. Throws kInvalidArgument if a footprint lacks truth_label.
std::unique_ptr<SegmentationBackend> MakeReplayOracleBackend(
    std::vector<footprints::BuildingFootprint> footprints, const geo::GeoTransform& transform);

// Counter-based uniform scores keyed on (seed, tile, class, row, col).
std::unique_ptr<SegmentationBackend> MakeUniformRandomBackend(std::uint64_t seed);

std::unique_ptr<SegmentationBackend> MakeConstantBackend(DamageClass cls);

// Reads `scores_<col>_<row>.ssp` files produced by an external model.
std::unique_ptr<SegmentationBackend> MakeScoreDirBackend(std::filesystem::path dir);

// Row key of the random backend, exposed for tests.
std::uint32_t RandomRowKey(std::uint64_t seed, std::uint32_t tile_col, std::uint32_t tile_row,
                           int cls, std::uint32_t row);

// --- score-plane exchange format -------------------------------------------
//
// Little-endian: magic "SUASSCR1"; u32 version=1, tile_col, tile_row, width,
// height, num_classes=5, dtype=0 (binary32), reserved=0; 24 zero bytes
// (64-byte header); then class-major, row-major float payload.

inline constexpr std::size_t kScorePlaneHeaderBytes = 64;
inline constexpr std::uint32_t kScorePlaneVersion = 1;

std::uint64_t ScorePlaneFileSize(std::uint32_t width, std::uint32_t height);
std::string ScorePlaneFileName(std::uint32_t tile_col, std::uint32_t tile_row);

std::vector<std::uint8_t> EncodeScorePlane(const ScorePlaneTile& tile);
// Throws kFormat naming the offending header field, kLength on truncation.
ScorePlaneTile DecodeScorePlane(std::span<const std::uint8_t> bytes);

void WriteScorePlane(const ScorePlaneTile& tile, const std::filesystem::path& path);
ScorePlaneTile ReadScorePlane(const std::filesystem::path& path);

}  // namespace suas::inference
