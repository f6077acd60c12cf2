#include "suas/evaluation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "suas/error.hpp"

namespace suas::evaluation {
using nlohmann::ordered_json;

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) {
    for (std::uint64_t v : row) n += v;
  }
  return n;
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t n = 0;
  for (std::uint64_t v : counts[truth]) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::col_sum(int predicted) const {
  std::uint64_t n = 0;
  for (const auto& row : counts) n += row[predicted];
  return n;
}

namespace {

std::string JoinIds(const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 10;
  std::string out;
  for (std::size_t i = 0; i < std::min(ids.size(), kShown); ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kShown) out += fmt::format(", ... ({} total)", ids.size());
  return out;
}

}  // namespace

ConfusionMatrix Confusion(const std::vector<LabeledBuilding>& truth,
                          const std::vector<LabeledBuilding>& predicted) {
  std::unordered_map<std::string, DamageClass> pred_by_id;
  std::vector<std::string> duplicates;
  for (const auto& p : predicted) {
    if (!pred_by_id.emplace(p.id, p.label).second) duplicates.push_back(p.id);
  }
  std::vector<std::string> missing_pred;
  std::set<std::string> truth_ids;
  for (const auto& t : truth) {
    if (!truth_ids.insert(t.id).second) duplicates.push_back(t.id);
    if (!pred_by_id.contains(t.id)) missing_pred.push_back(t.id);
  }
  std::vector<std::string> missing_truth;
  for (const auto& p : predicted) {
    if (!truth_ids.contains(p.id)) missing_truth.push_back(p.id);
  }
  if (truth.size() != predicted.size() || !missing_pred.empty() || !missing_truth.empty() ||
      !duplicates.empty()) {
    std::string msg = fmt::format("{} truth vs {} predicted buildings", truth.size(), predicted.size());
    if (!missing_pred.empty()) msg += fmt::format("; no prediction for: {}", JoinIds(missing_pred));
    if (!missing_truth.empty()) msg += fmt::format("; no truth for: {}", JoinIds(missing_truth));
    if (!duplicates.empty()) msg += fmt::format("; duplicate ids: {}", JoinIds(duplicates));
    throw Error(ErrorKind::kPairing, msg);
  }
  ConfusionMatrix m;
  for (const auto& t : truth) ++m.counts[Ordinal(t.label)][Ordinal(pred_by_id.at(t.id))];
  return m;
}

std::array<ClassMetrics, kNumClasses> PerClassMetrics(const ConfusionMatrix& m) {
  std::array<ClassMetrics, kNumClasses> out{};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto tp = static_cast<double>(m.counts[c][c]);
    const auto predicted = static_cast<double>(m.col_sum(c));
    const auto actual = static_cast<double>(m.row_sum(c));
    ClassMetrics& k = out[c];
    k.precision = predicted > 0 ? tp / predicted : 0.0;
    k.recall = actual > 0 ? tp / actual : 0.0;
    const double denom = k.precision + k.recall;
    k.f1 = denom > 0 ? 2.0 * k.precision * k.recall / denom : 0.0;
  }
  return out;
}

double MacroF1(const ConfusionMatrix& m) {
  double sum = 0.0;
  for (const ClassMetrics& k : PerClassMetrics(m)) sum += k.f1;
  return sum / kNumClasses;
}

std::string_view ToString(AlignmentMode mode) {
  return mode == AlignmentMode::kAligned ? "aligned" : "unaligned";
}

std::optional<AlignmentMode> ParseAlignmentMode(std::string_view s) {
  if (s == "aligned") return AlignmentMode::kAligned;
  if (s == "unaligned") return AlignmentMode::kUnaligned;
  return std::nullopt;
}

std::string_view ToString(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "test";
}

std::optional<Split> ParseSplit(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

SplitManifest ParseSplitManifest(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text.begin(), text.end());
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorKind::kParse, fmt::format("split manifest: {}", e.what()));
  }
  if (!doc.is_object()) throw Error(ErrorKind::kParse, "split manifest must be a JSON object");
  SplitManifest manifest;
  for (const auto& [ortho, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("disaster_id") || !entry.contains("split") ||
        !entry["disaster_id"].is_string() || !entry["split"].is_string()) {
      throw Error(ErrorKind::kParse,
                  fmt::format("split manifest entry '{}' needs string disaster_id and split", ortho));
    }
    const auto split = ParseSplit(entry["split"].get<std::string>());
    if (!split) {
      throw Error(ErrorKind::kParse, fmt::format("split manifest entry '{}': unknown split '{}'",
                                                 ortho, entry["split"].get<std::string>()));
    }
    manifest.entries[ortho] = {entry["disaster_id"].get<std::string>(), *split};
  }
  return manifest;
}

std::string EmitSplitManifest(const SplitManifest& manifest) {
  ordered_json doc = ordered_json::object();
  for (const auto& [ortho, entry] : manifest.entries) {
    doc[ortho] = {{"disaster_id", entry.disaster_id}, {"split", ToString(entry.split)}};
  }
  return doc.dump(2) + "\n";
}

std::map<Split, SplitSummary> SummarizeManifest(const SplitManifest& manifest) {
  std::map<std::string, std::set<Split>> splits_of_disaster;
  for (const auto& [ortho, entry] : manifest.entries) {
    splits_of_disaster[entry.disaster_id].insert(entry.split);
  }
  std::vector<std::string> violations;
  for (const auto& [disaster, splits] : splits_of_disaster) {
    if (splits.size() > 1) {
      std::string names;
      for (Split s : splits) names += fmt::format("{}{}", names.empty() ? "" : "+", ToString(s));
      violations.push_back(fmt::format("{} ({})", disaster, names));
    }
  }
  if (!violations.empty()) {
    throw Error(ErrorKind::kManifestInvariant,
                fmt::format("disasters split across partitions: {}", JoinIds(violations)));
  }
  std::map<Split, SplitSummary> out;
  std::map<Split, std::set<std::string>> disasters;
  for (const auto& [ortho, entry] : manifest.entries) {
    ++out[entry.split].orthomosaics;
    disasters[entry.split].insert(entry.disaster_id);
  }
  for (auto& [split, summary] : out) {
    summary.disasters = static_cast<std::int64_t>(disasters[split].size());
  }
  return out;
}

EvalReport MakeReport(const ConfusionMatrix& m, AlignmentMode mode, std::string split_id) {
  EvalReport report;
  report.matrix = m;
  report.per_class = PerClassMetrics(m);
  double sum = 0.0;
  for (const ClassMetrics& k : report.per_class) sum += k.f1;
  report.macro_f1 = sum / kNumClasses;
  report.alignment_mode = mode;
  report.split_id = std::move(split_id);
  report.building_count = static_cast<std::int64_t>(m.total());
  return report;
}

EvalReport EvaluateRun(const std::vector<assessment::BuildingAssessment>& assessments,
                       const std::vector<footprints::BuildingFootprint>& truth, AlignmentMode mode,
                       const SplitManifest* manifest, std::optional<Split> split) {
  std::vector<LabeledBuilding> truth_labels;
  std::vector<LabeledBuilding> predictions;
  std::unordered_map<std::string, const footprints::BuildingFootprint*> truth_by_id;
  std::vector<std::string> unlabeled;
  for (const auto& f : truth) {
    truth_by_id[f.id] = &f;
    if (!f.truth_label) unlabeled.push_back(f.id);
  }
  if (!unlabeled.empty()) {
    throw Error(ErrorKind::kPairing,
                fmt::format("truth footprints without damage labels: {}", JoinIds(unlabeled)));
  }
  // Pair the full sets first so that mismatches surface regardless of split.
  {
    std::vector<LabeledBuilding> all_truth;
    std::vector<LabeledBuilding> all_pred;
    for (const auto& f : truth) all_truth.push_back({f.id, *f.truth_label});
    for (const auto& a : assessments) all_pred.push_back({a.building_id, a.predicted});
    (void)Confusion(all_truth, all_pred);
  }
  const bool filter = manifest != nullptr && split.has_value();
  for (const auto& a : assessments) {
    const footprints::BuildingFootprint& f = *truth_by_id.at(a.building_id);
    if (filter) {
      if (!f.orthomosaic_id) continue;
      const auto it = manifest->entries.find(*f.orthomosaic_id);
      if (it == manifest->entries.end() || it->second.split != *split) continue;
    }
    truth_labels.push_back({f.id, *f.truth_label});
    predictions.push_back({a.building_id, a.predicted});
  }
  return MakeReport(Confusion(truth_labels, predictions), mode,
                    filter ? std::string(ToString(*split)) : "all");
}

ordered_json ToJson(const EvalReport& report) {
  ordered_json per_class = ordered_json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    ordered_json k;
    k["class"] = ToString(kAllClasses[c]);
    k["precision"] = report.per_class[c].precision;
    k["recall"] = report.per_class[c].recall;
    k["f1"] = report.per_class[c].f1;
    per_class.push_back(std::move(k));
  }
  ordered_json matrix = ordered_json::array();
  for (const auto& row : report.matrix.counts) matrix.push_back(row);
  ordered_json out;
  out["per_class"] = std::move(per_class);
  out["matrix"] = std::move(matrix);
  out["macro_f1"] = report.macro_f1;
  out["alignment_mode"] = ToString(report.alignment_mode);
  out["split_id"] = report.split_id;
  out["building_count"] = report.building_count;
  return out;
}

EvalReport EvalReportFromJson(const ordered_json& j) {
  try {
    EvalReport r;
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& k = j.at("per_class").at(c);
      r.per_class[c] = {k.at("precision").get<double>(), k.at("recall").get<double>(),
                        k.at("f1").get<double>()};
      for (int p = 0; p < kNumClasses; ++p) {
        r.matrix.counts[c][p] = j.at("matrix").at(c).at(p).get<std::uint64_t>();
      }
    }
    r.macro_f1 = j.at("macro_f1").get<double>();
    const auto mode = ParseAlignmentMode(j.at("alignment_mode").get<std::string>());
    if (!mode) throw Error(ErrorKind::kParse, "eval report: bad alignment_mode");
    r.alignment_mode = *mode;
    r.split_id = j.at("split_id").get<std::string>();
    r.building_count = j.at("building_count").get<std::int64_t>();
    return r;
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("eval report: {}", e.what()));
  }
}

}  // namespace suas::evaluation
