#include "suas/footprints.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "suas/error.hpp"

namespace suas {

std::string_view ToString(DamageClass c) {
  switch (c) {
    case DamageClass::kNoDamage: return "no-damage";
    case DamageClass::kMinorDamage: return "minor-damage";
    case DamageClass::kMajorDamage: return "major-damage";
    case DamageClass::kDestroyed: return "destroyed";
    case DamageClass::kUnClassified: return "un-classified";
  }
  return "un-classified";
}

std::optional<DamageClass> ParseDamageClass(std::string_view s) {
  for (DamageClass c : kAllClasses) {
    if (ToString(c) == s) return c;
  }
  return std::nullopt;
}

}  // namespace suas

namespace suas::footprints {
using nlohmann::ordered_json;

namespace {

std::pair<std::size_t, std::size_t> LineAndColumn(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

double RingSignedArea(const Ring& ring) {
  if (ring.empty()) return 0.0;
  // Relative to the first vertex so projected coordinates do not cancel.
  const Point o = ring.front();
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    sum += (ring[i].x - o.x) * (ring[i + 1].y - o.y) - (ring[i + 1].x - o.x) * (ring[i].y - o.y);
  }
  return 0.5 * sum;
}

int Orientation(const Point& a, const Point& b, const Point& c) {
  const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return (v > 0) - (v < 0);
}

bool OnSegment(const Point& a, const Point& b, const Point& p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool SegmentsIntersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const int o1 = Orientation(p1, p2, q1);
  const int o2 = Orientation(p1, p2, q2);
  const int o3 = Orientation(q1, q2, p1);
  const int o4 = Orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && OnSegment(p1, p2, q1)) || (o2 == 0 && OnSegment(p1, p2, q2)) ||
         (o3 == 0 && OnSegment(q1, q2, p1)) || (o4 == 0 && OnSegment(q1, q2, p2));
}

bool SelfIntersects(const Ring& ring) {
  const std::size_t n = ring.size() - 1;  // edges
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (SegmentsIntersect(ring[i], ring[i + 1], ring[j], ring[j + 1])) return true;
    }
  }
  return false;
}

// Closes the ring and checks it has at least three distinct vertices.
std::optional<Ring> ReadRing(const ordered_json& coords) {
  if (!coords.is_array()) return std::nullopt;
  Ring ring;
  ring.reserve(coords.size() + 1);
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      return std::nullopt;
    }
    ring.push_back({pos[0].get<double>(), pos[1].get<double>()});
  }
  if (ring.empty()) return std::nullopt;
  if (!(ring.front() == ring.back())) ring.push_back(ring.front());
  std::vector<Point> distinct(ring.begin(), ring.end() - 1);
  std::sort(distinct.begin(), distinct.end(),
            [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) return std::nullopt;
  return ring;
}

ordered_json RingToJson(const Ring& ring) {
  ordered_json out = ordered_json::array();
  for (const Point& p : ring) out.push_back({p.x, p.y});
  return out;
}

std::optional<std::string> IdToString(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return fmt::format("{}", v.get<double>());
  return std::nullopt;
}

}  // namespace

ParseResult ParseFootprints(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text.begin(), text.end());
  } catch (const ordered_json::parse_error& e) {
    const auto [line, col] = LineAndColumn(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorKind::kParse,
                fmt::format("malformed GeoJSON at line {}, column {} (offset {})", line, col, e.byte));
  }

  ParseResult result;
  std::vector<ordered_json> features;
  const std::string type = doc.is_object() ? doc.value("type", "") : "";
  if (type == "FeatureCollection") {
    if (!doc.contains("features") || !doc["features"].is_array()) {
      throw Error(ErrorKind::kParse, "FeatureCollection lacks a 'features' array");
    }
    for (const auto& f : doc["features"]) features.push_back(f);
  } else if (type == "Feature") {
    features.push_back(doc);
  } else {
    throw Error(ErrorKind::kParse, "expected a GeoJSON FeatureCollection or Feature");
  }

  std::unordered_set<std::string> seen;
  std::size_t auto_ids = 0;
  for (std::size_t index = 0; index < features.size(); ++index) {
    const ordered_json& feature = features[index];
    const ordered_json props = feature.contains("properties") && feature["properties"].is_object()
                                   ? feature["properties"]
                                   : ordered_json::object();
    std::optional<std::string> id;
    if (feature.contains("id")) id = IdToString(feature["id"]);
    if (!id && props.contains("id")) id = IdToString(props["id"]);
    if (!id) {
      id = fmt::format("auto-{}", auto_ids++);
      result.warnings.push_back(
          {"missing-id", fmt::format("feature {} has no id; assigned '{}'", index, *id)});
    }

    const ordered_json* geometry =
        feature.contains("geometry") && feature["geometry"].is_object() ? &feature["geometry"] : nullptr;
    const std::string gtype = geometry != nullptr ? geometry->value("type", "") : "";
    if (gtype != "Polygon" && gtype != "MultiPolygon") {
      result.warnings.push_back(
          {"non-polygon", fmt::format("feature '{}' has {} geometry; skipped", *id,
                                      gtype.empty() ? "no" : gtype)});
      continue;
    }

    BuildingFootprint base;
    for (const auto& [key, value] : props.items()) {
      if (key == "id") continue;
      if (key == "damage" && value.is_string()) {
        if (auto label = ParseDamageClass(value.get<std::string>())) {
          base.truth_label = label;
          continue;
        }
        result.warnings.push_back({"unknown-damage", fmt::format("feature '{}' has damage '{}'",
                                                                 *id, value.get<std::string>())});
      } else if (key == "alignment_offset" && value.is_array() && value.size() == 2 &&
                 value[0].is_number() && value[1].is_number()) {
        base.alignment_offset = Offset{value[0].get<double>(), value[1].get<double>()};
        continue;
      } else if (key == "orthomosaic_id" && value.is_string()) {
        base.orthomosaic_id = value.get<std::string>();
        continue;
      }
      base.extra_properties[key] = value;
    }

    const ordered_json& coords = geometry->contains("coordinates") ? (*geometry)["coordinates"]
                                                                   : ordered_json();
    std::vector<const ordered_json*> polygons;
    if (gtype == "Polygon") {
      polygons.push_back(&coords);
    } else if (coords.is_array()) {
      for (const auto& part : coords) polygons.push_back(&part);
    }
    for (std::size_t part = 0; part < polygons.size(); ++part) {
      const std::string part_id = gtype == "Polygon" ? *id : fmt::format("{}#{}", *id, part);
      const ordered_json& rings = *polygons[part];
      std::optional<Ring> exterior;
      if (rings.is_array() && !rings.empty()) exterior = ReadRing(rings[0]);
      if (!exterior) {
        result.warnings.push_back(
            {"invalid-ring", fmt::format("'{}' has no valid exterior ring; skipped", part_id)});
        continue;
      }
      BuildingFootprint f = base;
      f.id = part_id;
      f.exterior = std::move(*exterior);
      for (std::size_t h = 1; h < rings.size(); ++h) {
        if (auto hole = ReadRing(rings[h])) {
          f.holes.push_back(std::move(*hole));
        } else {
          result.warnings.push_back(
              {"invalid-ring", fmt::format("'{}' hole {} is degenerate; dropped", part_id, h)});
        }
      }
      if (SelfIntersects(f.exterior)) {
        result.warnings.push_back(
            {"self-intersecting", fmt::format("'{}' exterior ring self-intersects", part_id)});
      }
      if (!seen.insert(f.id).second) {
        result.warnings.push_back({"duplicate-id", fmt::format("id '{}' appears twice", f.id)});
      }
      result.footprints.push_back(std::move(f));
    }
  }
  return result;
}

std::string EmitFootprints(const std::vector<BuildingFootprint>& footprints,
                           const ordered_json& foreign_members) {
  ordered_json doc = ordered_json::object();
  doc["type"] = "FeatureCollection";
  for (const auto& [key, value] : foreign_members.items()) doc[key] = value;
  ordered_json features = ordered_json::array();
  for (const BuildingFootprint& f : footprints) {
    ordered_json rings = ordered_json::array();
    rings.push_back(RingToJson(f.exterior));
    for (const Ring& hole : f.holes) rings.push_back(RingToJson(hole));
    ordered_json props = ordered_json::object();
    props["id"] = f.id;
    if (f.truth_label) props["damage"] = ToString(*f.truth_label);
    if (f.alignment_offset) props["alignment_offset"] = {f.alignment_offset->dx, f.alignment_offset->dy};
    if (f.orthomosaic_id) props["orthomosaic_id"] = *f.orthomosaic_id;
    for (const auto& [key, value] : f.extra_properties.items()) props[key] = value;
    ordered_json feature = ordered_json::object();
    feature["type"] = "Feature";
    feature["id"] = f.id;
    feature["geometry"] = {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
  }
  doc["features"] = std::move(features);
  return doc.dump(2) + "\n";
}

BuildingFootprint Translate(const BuildingFootprint& f, double dx, double dy) {
  BuildingFootprint out = f;
  auto shift = [&](Ring& ring) {
    for (Point& p : ring) {
      p.x += dx;
      p.y += dy;
    }
  };
  shift(out.exterior);
  for (Ring& hole : out.holes) shift(hole);
  if (out.alignment_offset || dx != 0.0 || dy != 0.0) {
    const Offset current = out.alignment_offset.value_or(Offset{});
    out.alignment_offset = Offset{current.dx - dx, current.dy - dy};
  }
  return out;
}

BuildingFootprint Registered(const BuildingFootprint& f) {
  if (!f.alignment_offset) return f;
  BuildingFootprint out = Translate(f, f.alignment_offset->dx, f.alignment_offset->dy);
  out.alignment_offset.reset();
  return out;
}

double PolygonArea(const BuildingFootprint& f) {
  double area = std::abs(RingSignedArea(f.exterior));
  for (const Ring& hole : f.holes) area -= std::abs(RingSignedArea(hole));
  return std::max(area, 0.0);
}

BoundingBox Bounds(const BuildingFootprint& f) {
  BoundingBox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const Point& p : f.exterior) {
    box.min_x = std::min(box.min_x, p.x);
    box.min_y = std::min(box.min_y, p.y);
    box.max_x = std::max(box.max_x, p.x);
    box.max_y = std::max(box.max_y, p.y);
  }
  return box;
}

geo::PixelWindow PixelBounds(const BuildingFootprint& f, const geo::GeoTransform& t) {
  const BoundingBox box = Bounds(f);
  const geo::PixelCoord a = geo::WorldToPixel(t, box.min_x, box.min_y);
  const geo::PixelCoord b = geo::WorldToPixel(t, box.max_x, box.max_y);
  const auto lo = [](double v, double w) { return static_cast<std::int64_t>(std::floor(std::min(v, w))) - 1; };
  const auto hi = [](double v, double w) { return static_cast<std::int64_t>(std::ceil(std::max(v, w))) + 1; };
  const std::int64_t c0 = lo(a.col, b.col);
  const std::int64_t c1 = hi(a.col, b.col);
  const std::int64_t r0 = lo(a.row, b.row);
  const std::int64_t r1 = hi(a.row, b.row);
  return {c0, r0, c1 - c0, r1 - r0};
}

PixelMask::PixelMask(const geo::PixelWindow& window)
    : window_(window),
      words_per_row_((std::max<std::int64_t>(window.width, 0) + 63) / 64),
      words_(static_cast<std::size_t>(words_per_row_ * std::max<std::int64_t>(window.height, 0)), 0) {}

bool PixelMask::Test(std::int64_t col, std::int64_t row) const {
  const std::int64_t c = col - window_.x;
  const std::int64_t r = row - window_.y;
  if (c < 0 || r < 0 || c >= window_.width || r >= window_.height) return false;
  return (words_[r * words_per_row_ + (c >> 6)] >> (c & 63)) & 1u;
}

void PixelMask::Set(std::int64_t col, std::int64_t row) { SetSpan(row, col, col + 1); }

void PixelMask::SetSpan(std::int64_t row, std::int64_t col_begin, std::int64_t col_end) {
  std::uint64_t* words = words_.data() + (row - window_.y) * words_per_row_;
  for (std::int64_t c = col_begin - window_.x; c < col_end - window_.x;) {
    const std::int64_t bit = c & 63;
    const std::int64_t n = std::min<std::int64_t>(64 - bit, col_end - window_.x - c);
    const std::uint64_t bits = n == 64 ? ~0ull : ((1ull << n) - 1) << bit;
    words[c >> 6] |= bits;
    c += n;
  }
}

std::int64_t PixelMask::Count() const {
  std::int64_t n = 0;
  for (std::uint64_t w : words_) n += std::popcount(w);
  return n;
}

namespace {

// First column index in [lo, hi] whose centre x is >= bound.
std::int64_t FirstCenterAtOrAfter(const geo::GeoTransform& t, double bound, std::int64_t lo,
                                  std::int64_t hi) {
  const auto center = [&](std::int64_t c) {
    return geo::PixelToWorld(t, static_cast<double>(c) + 0.5, 0.0).x;
  };
  const double est = std::ceil((bound - t.origin_x) / t.pixel_width - 0.5);
  std::int64_t c = static_cast<std::int64_t>(std::clamp(est, static_cast<double>(lo), static_cast<double>(hi)));
  while (c > lo && center(c - 1) >= bound) --c;
  while (c < hi && center(c) < bound) ++c;
  return c;
}

}  // namespace

PixelMask Rasterize(const BuildingFootprint& f, const geo::GeoTransform& t,
                    const geo::PixelWindow& window, Warnings* warnings) {
  PixelMask mask(window);
  if (window.area() <= 0) return mask;
  if (RingSignedArea(f.exterior) == 0.0) {
    if (warnings != nullptr) {
      warnings->push_back({"zero-area", fmt::format("footprint '{}' has zero area", f.id)});
    }
    return mask;
  }
  const geo::PixelWindow span = geo::Intersect(PixelBounds(f, t), window);
  if (span.area() == 0) return mask;

  std::vector<const Ring*> rings{&f.exterior};
  for (const Ring& hole : f.holes) rings.push_back(&hole);
  std::vector<double> crossings;
  const std::int64_t col_lo = window.x;
  const std::int64_t col_hi = window.x + window.width;
  for (std::int64_t r = span.y; r < span.y + span.height; ++r) {
    const double yc = geo::PixelToWorld(t, 0.0, static_cast<double>(r) + 0.5).y;
    crossings.clear();
    for (const Ring* ring : rings) {
      for (std::size_t i = 0; i + 1 < ring->size(); ++i) {
        const Point& p = (*ring)[i];
        const Point& q = (*ring)[i + 1];
        if ((p.y > yc) != (q.y > yc)) {
          crossings.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const std::int64_t c0 = FirstCenterAtOrAfter(t, crossings[k], col_lo, col_hi);
      const std::int64_t c1 = FirstCenterAtOrAfter(t, crossings[k + 1], col_lo, col_hi);
      if (c1 > c0) mask.SetSpan(r, c0, c1);
    }
  }
  return mask;
}

double MaskIou(const PixelMask& a, const PixelMask& b) {
  if (!(a.window() == b.window())) {
    throw Error(ErrorKind::kInvalidArgument, "mask windows differ");
  }
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) {
    inter += std::popcount(a.words()[i] & b.words()[i]);
    uni += std::popcount(a.words()[i] | b.words()[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace suas::footprints
