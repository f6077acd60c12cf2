#include "suas/products.hpp"

#include <ctime>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "suas/error.hpp"

namespace suas::products {
using nlohmann::ordered_json;
using assessment::BuildingAssessment;

std::string EmitGeoJson(const std::vector<BuildingAssessment>& assessments,
                        const std::vector<footprints::BuildingFootprint>& fps,
                        std::string_view run_id, std::string_view crs_id) {
  std::unordered_map<std::string_view, const footprints::BuildingFootprint*> by_id;
  for (const auto& f : fps) by_id.emplace(f.id, &f);
  std::vector<std::string> unpaired;
  for (const auto& a : assessments) {
    if (!by_id.contains(a.building_id)) unpaired.push_back(a.building_id);
  }
  if (!unpaired.empty()) {
    throw Error(ErrorKind::kPairing, fmt::format("{} assessments have no footprint (first: '{}')",
                                                 unpaired.size(), unpaired.front()));
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["crs_id"] = crs_id;
  doc["run_id"] = run_id;
  ordered_json features = ordered_json::array();
  for (const auto& a : assessments) {
    const footprints::BuildingFootprint& f = *by_id.at(a.building_id);
    ordered_json rings = ordered_json::array();
    auto ring_json = [](const footprints::Ring& ring) {
      ordered_json r = ordered_json::array();
      for (const auto& p : ring) r.push_back({p.x, p.y});
      return r;
    };
    rings.push_back(ring_json(f.exterior));
    for (const auto& hole : f.holes) rings.push_back(ring_json(hole));
    ordered_json props;
    props["id"] = a.building_id;
    props["damage"] = ToString(a.predicted);
    props["class_sums"] = a.class_sums;
    props["pixel_count"] = a.pixel_count;
    props["flags"] = assessment::FlagNames(a.flags);
    props["run_id"] = run_id;
    ordered_json feature;
    feature["type"] = "Feature";
    feature["id"] = a.building_id;
    feature["geometry"] = {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
  }
  doc["features"] = std::move(features);
  return doc.dump(2) + "\n";
}

std::vector<BuildingAssessment> ParseAssessmentGeoJson(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text.begin(), text.end());
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorKind::kParse, fmt::format("assessment GeoJSON: {}", e.what()));
  }
  std::vector<BuildingAssessment> out;
  try {
    for (const auto& feature : doc.at("features")) {
      const auto& props = feature.at("properties");
      BuildingAssessment a;
      a.building_id = props.at("id").get<std::string>();
      const auto damage = ParseDamageClass(props.at("damage").get<std::string>());
      if (!damage) {
        throw Error(ErrorKind::kParse, fmt::format("building '{}': unknown damage", a.building_id));
      }
      a.predicted = *damage;
      if (props.contains("class_sums")) {
        for (int c = 0; c < kNumClasses; ++c) a.class_sums[c] = props["class_sums"].at(c).get<double>();
      }
      a.pixel_count = props.value("pixel_count", std::int64_t{0});
      if (props.contains("flags")) {
        for (const auto& flag : props["flags"]) a.flags |= assessment::ParseFlag(flag.get<std::string>());
      }
      out.push_back(std::move(a));
    }
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("assessment GeoJSON: {}", e.what()));
  }
  return out;
}

namespace {

std::string Num(double v) { return fmt::format("{:.6g}", v); }

std::vector<std::string_view> SplitLine(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Ids containing separators or quotes are quoted per RFC 4180.
std::string CsvField(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV record honouring RFC 4180 quoting.
std::vector<std::string> SplitRecord(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

std::string EmitCsv(const std::vector<BuildingAssessment>& assessments, bool schema_comment) {
  std::string out;
  if (schema_comment) {
    out += kCsvSchemaComment;
    out += '\n';
  }
  out += kCsvHeader;
  out += '\n';
  for (const auto& a : assessments) {
    std::string flags;
    for (const std::string& name : assessment::FlagNames(a.flags)) {
      if (!flags.empty()) flags += '|';
      flags += name;
    }
    out += fmt::format("{},{},{}", CsvField(a.building_id), ToString(a.predicted), a.pixel_count);
    for (double s : a.class_sums) out += "," + Num(s);
    out += "," + flags + "\n";
  }
  return out;
}

std::vector<BuildingAssessment> ParseCsv(std::string_view text) {
  std::vector<BuildingAssessment> out;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (std::string_view line : SplitLine(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) {
        throw Error(ErrorKind::kParse, fmt::format("csv line {}: unexpected header", line_no));
      }
      header_seen = true;
      continue;
    }
    const std::vector<std::string> fields = SplitRecord(line);
    if (fields.size() != 9) {
      throw Error(ErrorKind::kParse,
                  fmt::format("csv line {}: expected 9 fields, got {}", line_no, fields.size()));
    }
    BuildingAssessment a;
    a.building_id = fields[0];
    const auto damage = ParseDamageClass(fields[1]);
    if (!damage) throw Error(ErrorKind::kParse, fmt::format("csv line {}: unknown damage", line_no));
    a.predicted = *damage;
    try {
      a.pixel_count = std::stoll(fields[2]);
      for (int c = 0; c < kNumClasses; ++c) a.class_sums[c] = std::stod(fields[3 + c]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse, fmt::format("csv line {}: bad number", line_no));
    }
    if (!fields[8].empty()) {
      for (std::string_view flag : SplitLine(fields[8], '|')) a.flags |= assessment::ParseFlag(flag);
    }
    out.push_back(std::move(a));
  }
  if (!header_seen) throw Error(ErrorKind::kParse, "csv: missing header");
  return out;
}

std::string FormatRfc3339(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::chrono::system_clock::time_point ParseRfc3339(std::string_view text) {
  std::tm tm{};
  std::istringstream ss{std::string(text)};
  ss >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (ss.fail() || ss.get() != 'Z') {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("'{}' is not an RFC 3339 UTC timestamp (YYYY-MM-DDTHH:MM:SSZ)", text));
  }
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

ordered_json ToJson(const RunReport& r) {
  ordered_json out;
  out["run_id"] = r.run_id;
  out["started_at"] = FormatRfc3339(r.started_at);
  out["finished_at"] = FormatRfc3339(r.finished_at);
  out["wall_seconds"] = r.wall_seconds;
  out["input_bytes"] = r.input_bytes;
  out["tile_count"] = r.tile_count;
  out["tiles_processed"] = r.tiles_processed;
  out["building_count"] = r.building_count;
  out["backend_name"] = r.backend_name;
  out["gsd_m_per_px"] = r.gsd_m_per_px;
  out["peak_resident_bytes"] = r.peak_resident_bytes;
  ordered_json warnings = ordered_json::array();
  for (const Warning& w : r.warnings) warnings.push_back({{"code", w.code}, {"message", w.message}});
  out["warnings"] = std::move(warnings);
  out["config"] = r.config;
  return out;
}

RunReport RunReportFromJson(const ordered_json& j) {
  try {
    RunReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.started_at = ParseRfc3339(j.at("started_at").get<std::string>());
    r.finished_at = ParseRfc3339(j.at("finished_at").get<std::string>());
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.input_bytes = j.at("input_bytes").get<std::uint64_t>();
    r.tile_count = j.at("tile_count").get<std::int64_t>();
    r.tiles_processed = j.value("tiles_processed", std::int64_t{0});
    r.building_count = j.at("building_count").get<std::int64_t>();
    r.backend_name = j.at("backend_name").get<std::string>();
    r.gsd_m_per_px = j.at("gsd_m_per_px").get<double>();
    r.peak_resident_bytes = j.value("peak_resident_bytes", std::uint64_t{0});
    for (const auto& w : j.at("warnings")) {
      r.warnings.push_back({w.at("code").get<std::string>(), w.at("message").get<std::string>()});
    }
    r.config = j.value("config", ordered_json::object());
    return r;
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("run report: {}", e.what()));
  }
}

}  // namespace suas::products
