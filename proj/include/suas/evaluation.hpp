#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "suas/assessment.hpp"
#include "suas/footprints.hpp"

namespace suas::evaluation {

// Rows are truth classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int predicted) const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct LabeledBuilding {
  std::string id;
  DamageClass label;
};

// Pairs truth and prediction by id. Throws kPairing listing unmatched ids
// (and length mismatches).
ConfusionMatrix Confusion(const std::vector<LabeledBuilding>& truth,
                          const std::vector<LabeledBuilding>& predicted);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 is taken as 0 for precision, recall and F1.
std::array<ClassMetrics, kNumClasses> PerClassMetrics(const ConfusionMatrix& m);

// Mean of the five per-class F1 values, absent classes included.
double MacroF1(const ConfusionMatrix& m);

enum class AlignmentMode { kAligned, kUnaligned };
std::string_view ToString(AlignmentMode mode);
std::optional<AlignmentMode> ParseAlignmentMode(std::string_view s);

enum class Split { kTrain, kVal, kTest };
std::string_view ToString(Split split);
std::optional<Split> ParseSplit(std::string_view s);

struct ManifestEntry {
  std::string disaster_id;
  Split split = Split::kTest;
};

// orthomosaic id -> entry.
struct SplitManifest {
  std::map<std::string, ManifestEntry> entries;
};

// JSON object: {"<orthomosaic_id>": {"disaster_id": "...", "split": "train|val|test"}, ...}
SplitManifest ParseSplitManifest(std::string_view json_text);
std::string EmitSplitManifest(const SplitManifest& manifest);

struct SplitSummary {
  std::int64_t orthomosaics = 0;
  std::int64_t disasters = 0;
};

// Per-split counts. Throws kManifestInvariant when a disaster's orthomosaics
// span more than one split.
std::map<Split, SplitSummary> SummarizeManifest(const SplitManifest& manifest);

struct EvalReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double macro_f1 = 0.0;
  AlignmentMode alignment_mode = AlignmentMode::kAligned;
  std::string split_id = "all";
  std::int64_t building_count = 0;
  ConfusionMatrix matrix;
};

EvalReport MakeReport(const ConfusionMatrix& m, AlignmentMode mode, std::string split_id);

// Pairs assessments with truth footprints by id (kPairing on any mismatch),
// keeps buildings whose orthomosaic is in `split` when a manifest is given,
// and scores predicted against truth labels. Truth footprints must carry
// truth_label.
EvalReport EvaluateRun(const std::vector<assessment::BuildingAssessment>& assessments,
                       const std::vector<footprints::BuildingFootprint>& truth, AlignmentMode mode,
                       const SplitManifest* manifest = nullptr,
                       std::optional<Split> split = std::nullopt);

nlohmann::ordered_json ToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const nlohmann::ordered_json& j);

}  // namespace suas::evaluation
