#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "suas/assessment.hpp"
#include "suas/footprints.hpp"
#include "suas/warning.hpp"

namespace suas::products {

inline constexpr std::string_view kCsvHeader =
    "building_id,damage,pixel_count,sum_no_damage,sum_minor_damage,sum_major_damage,"
    "sum_destroyed,sum_un_classified,flags";
inline constexpr std::string_view kCsvSchemaComment = "# suas-assess buildings csv v1";

// FeatureCollection with one Feature per assessment (input order). Geometry
// comes from the footprint with the same id; properties are id, damage,
// class_sums, pixel_count, flags, run_id. `crs_id` is recorded as a
// top-level foreign member. Throws kPairing for unmatched assessments.
std::string EmitGeoJson(const std::vector<assessment::BuildingAssessment>& assessments,
                        const std::vector<footprints::BuildingFootprint>& footprints,
                        std::string_view run_id, std::string_view crs_id);

// Reads the `EmitGeoJson` product back into assessments (input order).
std::vector<assessment::BuildingAssessment> ParseAssessmentGeoJson(std::string_view text);

// Header, then one row per building. Numbers use at most 6 significant
// digits in the C locale; flags are joined with '|'.
std::string EmitCsv(const std::vector<assessment::BuildingAssessment>& assessments,
                    bool schema_comment = false);
std::vector<assessment::BuildingAssessment> ParseCsv(std::string_view text);

std::string FormatRfc3339(std::chrono::system_clock::time_point t);
std::chrono::system_clock::time_point ParseRfc3339(std::string_view text);

struct RunReport {
  std::string run_id;
  std::chrono::system_clock::time_point started_at;
  std::chrono::system_clock::time_point finished_at;
  double wall_seconds = 0.0;
  std::uint64_t input_bytes = 0;
  std::int64_t tile_count = 0;
  std::int64_t tiles_processed = 0;
  std::int64_t building_count = 0;
  std::string backend_name;
  double gsd_m_per_px = 0.0;
  std::uint64_t peak_resident_bytes = 0;
  Warnings warnings;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

nlohmann::ordered_json ToJson(const RunReport& report);
RunReport RunReportFromJson(const nlohmann::ordered_json& j);

}  // namespace suas::products
