#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "suas/geo_raster.hpp"
#include "suas/warning.hpp"

namespace suas {

// Joint Damage Scale. Ordinals are the on-disk / score-plane class indices.
enum class DamageClass : std::uint8_t {
  kNoDamage = 0,
  kMinorDamage = 1,
  kMajorDamage = 2,
  kDestroyed = 3,
  kUnClassified = 4,
};

inline constexpr int kNumClasses = 5;
inline constexpr std::array<DamageClass, kNumClasses> kAllClasses = {
    DamageClass::kNoDamage, DamageClass::kMinorDamage, DamageClass::kMajorDamage,
    DamageClass::kDestroyed, DamageClass::kUnClassified};

constexpr int Ordinal(DamageClass c) { return static_cast<int>(c); }

// Property-string spelling: "no-damage", "minor-damage", ...
std::string_view ToString(DamageClass c);
std::optional<DamageClass> ParseDamageClass(std::string_view s);

// Rank used for ties and overlaps: destroyed > major > minor > no_damage >
// un_classified.
constexpr int SeverityRank(DamageClass c) {
  return c == DamageClass::kUnClassified ? -1 : Ordinal(c);
}

}  // namespace suas

namespace suas::footprints {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Closed ring: front() == back().
using Ring = std::vector<Point>;

struct Offset {
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

struct BuildingFootprint {
  std::string id;
  Ring exterior;
  std::vector<Ring> holes;
  std::optional<DamageClass> truth_label;
  // Translation that registers this footprint to the imagery.
  std::optional<Offset> alignment_offset;
  // Orthomosaic the building belongs to (property "orthomosaic_id").
  std::optional<std::string> orthomosaic_id;
  // Unrecognised feature properties, kept for round trips.
  nlohmann::ordered_json extra_properties = nlohmann::ordered_json::object();
};

struct ParseResult {
  std::vector<BuildingFootprint> footprints;
  Warnings warnings;
};

// Reads a GeoJSON FeatureCollection (or a single Feature). Polygon and
// MultiPolygon features become footprints; MultiPolygon parts get ids
// "<id>#<k>". Malformed JSON throws kParse with line/column.
ParseResult ParseFootprints(std::string_view geojson_text);

// Inverse of ParseFootprints: one Polygon feature per footprint, recognised
// properties plus the preserved extras. `foreign_members` are added at the
// top level of the FeatureCollection.
std::string EmitFootprints(const std::vector<BuildingFootprint>& footprints,
                           const nlohmann::ordered_json& foreign_members =
                               nlohmann::ordered_json::object());

// Shifts every vertex by (dx, dy). The registration correction is updated so
// that it still points at the registered position (offset -= (dx, dy)).
BuildingFootprint Translate(const BuildingFootprint& f, double dx, double dy);

// Applies the stored registration correction, if any, and clears it.
BuildingFootprint Registered(const BuildingFootprint& f);

// Shoelace area with holes subtracted.
double PolygonArea(const BuildingFootprint& f);

struct BoundingBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;
};
BoundingBox Bounds(const BuildingFootprint& f);

// Pixel window (possibly partly outside any raster) of the pixels whose
// centres can fall inside the footprint.
geo::PixelWindow PixelBounds(const BuildingFootprint& f, const geo::GeoTransform& t);

// Bitmap over a pixel window; bit set = pixel covered.
class PixelMask {
 public:
  PixelMask() = default;
  explicit PixelMask(const geo::PixelWindow& window);

  const geo::PixelWindow& window() const { return window_; }
  bool Test(std::int64_t col, std::int64_t row) const;  // absolute pixel coords
  void Set(std::int64_t col, std::int64_t row);
  // Sets [col_begin, col_end) on `row` (absolute coords, already clipped).
  void SetSpan(std::int64_t row, std::int64_t col_begin, std::int64_t col_end);
  std::int64_t Count() const;
  bool Empty() const { return Count() == 0; }

  // Visits maximal covered runs as (row, col_begin, col_end), absolute
  // coordinates, rows ascending.
  template <typename Fn>
  void ForEachSpan(Fn&& fn) const;

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::int64_t words_per_row() const { return words_per_row_; }

 private:
  geo::PixelWindow window_;
  std::int64_t words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

// Pixel (c, r) is covered iff its centre lies inside the polygon under the
// even-odd rule (holes subtract). The result is clipped to `window`.
// Zero-area footprints yield an empty mask and a warning.
PixelMask Rasterize(const BuildingFootprint& f, const geo::GeoTransform& t,
                    const geo::PixelWindow& window, Warnings* warnings = nullptr);

// |a ∩ b| / |a ∪ b|; 1 when both are empty. Windows must match.
double MaskIou(const PixelMask& a, const PixelMask& b);

template <typename Fn>
void PixelMask::ForEachSpan(Fn&& fn) const {
  for (std::int64_t r = 0; r < window_.height; ++r) {
    const std::uint64_t* row = words_.data() + r * words_per_row_;
    std::int64_t c = 0;
    while (c < window_.width) {
      const std::int64_t w = c >> 6;
      const std::uint64_t word = row[w] >> (c & 63);
      if (word == 0) {
        c = (w + 1) << 6;
        continue;
      }
      c += __builtin_ctzll(word);
      if (c >= window_.width) break;
      const std::int64_t begin = c;
      while (c < window_.width) {
        const std::int64_t cw = c >> 6;
        const std::uint64_t clear = (~row[cw]) >> (c & 63);
        if (clear == 0) {
          c = (cw + 1) << 6;
          continue;
        }
        c += __builtin_ctzll(clear);
        break;
      }
      const std::int64_t end = std::min(c, window_.width);
      fn(window_.y + r, window_.x + begin, window_.x + end);
    }
  }
}

}  // namespace suas::footprints
