#include "suas/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "suas/alignment.hpp"
#include "suas/assessment.hpp"
#include "suas/error.hpp"
#include "suas/evaluation.hpp"
#include "suas/products.hpp"
#include "suas/raster_io.hpp"

namespace suas::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::unique_ptr<inference::SegmentationBackend> MakeBackend(
    std::string_view spec, std::uint64_t seed,
    const std::vector<footprints::BuildingFootprint>* truth, const geo::GeoTransform* transform) {
  if (spec == "replay") {
    if (truth == nullptr || transform == nullptr) {
      throw Error(ErrorKind::kInvalidArgument, "the replay backend needs --footprints");
    }
    return inference::MakeReplayOracleBackend(*truth, *transform);
  }
  if (spec == "random") return inference::MakeUniformRandomBackend(seed);
  if (spec.starts_with("constant:")) {
    const std::string_view name = spec.substr(9);
    if (auto cls = ParseDamageClass(name)) return inference::MakeConstantBackend(*cls);
    if (name.size() == 1 && name[0] >= '0' && name[0] < '0' + kNumClasses) {
      return inference::MakeConstantBackend(static_cast<DamageClass>(name[0] - '0'));
    }
    throw Error(ErrorKind::kInvalidArgument, fmt::format("unknown class in backend '{}'", spec));
  }
  if (spec.starts_with("scoredir:")) {
    return inference::MakeScoreDirBackend(fs::path(std::string(spec.substr(9))));
  }
  throw Error(ErrorKind::kInvalidArgument,
              fmt::format("unknown backend '{}' (replay|random|constant:<class>|scoredir:<path>)", spec));
}

namespace {

std::string ReadFile(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, fmt::format("no such file: {}", path.string()));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  out << text;
}

// "-" or empty writes to stdout.
void Emit(const std::string& path, std::string_view text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    WriteFile(path, text);
  }
}

struct Options {
  // global
  std::int64_t tile_size = geo::kDefaultTileSize;
  std::int64_t min_pixels = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string mode = "aligned";
  std::string backend = "replay";
  // shared inputs/outputs
  std::string raster;
  std::string footprints;
  std::string output;
  std::string out_dir;
  // assess
  std::string run_id;
  std::string clock;
  bool vote = false;
  bool skip_empty = false;
  bool csv_comment = false;
  std::uint64_t budget_mib = kDefaultPixelBudgetBytes >> 20;
  // evaluate
  std::string assessments;
  std::string truth;
  std::string manifest;
  std::string split;
  // perturb
  double dx = 0.0;
  double dy = 0.0;
  // align
  double window = 0.5;
  double step = 0.1;
  std::string objective = "concentration";
  bool surface = false;
  std::string corrected;
  // sample
  std::int64_t count = 1000;
  std::vector<double> target;
  // export
  std::string input;
  std::string format = "csv";
};

std::vector<footprints::BuildingFootprint> LoadFootprints(const std::string& path, Warnings* warnings) {
  auto parsed = footprints::ParseFootprints(ReadFile(path));
  if (warnings != nullptr) {
    for (auto& w : parsed.warnings) warnings->push_back(std::move(w));
  }
  return std::move(parsed.footprints);
}

evaluation::AlignmentMode Mode(const Options& o) {
  return *evaluation::ParseAlignmentMode(o.mode);
}

// Footprints used for the assess chain under the chosen mode.
std::vector<footprints::BuildingFootprint> ForMode(
    const std::vector<footprints::BuildingFootprint>& fps, evaluation::AlignmentMode mode) {
  if (mode == evaluation::AlignmentMode::kUnaligned) return fps;
  std::vector<footprints::BuildingFootprint> out;
  out.reserve(fps.size());
  for (const auto& f : fps) out.push_back(footprints::Registered(f));
  return out;
}

std::vector<footprints::BuildingFootprint> RegisteredAll(
    const std::vector<footprints::BuildingFootprint>& fps) {
  return ForMode(fps, evaluation::AlignmentMode::kAligned);
}

int CmdTile(const Options& o, std::ostream& out) {
  const geo::GeoRaster raster = geo::OpenRaster(o.raster);
  const geo::TileGrid grid = geo::MakeTileGrid(raster, o.tile_size);
  ordered_json doc;
  doc["width"] = raster.width();
  doc["height"] = raster.height();
  doc["tile_size"] = grid.tile_size();
  doc["cols"] = grid.cols();
  doc["rows"] = grid.rows();
  ordered_json tiles = ordered_json::array();
  for (std::int64_t i = 0; i < grid.count(); ++i) {
    const geo::Tile t = grid.At(i);
    ordered_json e;
    e["tile_col"] = t.col;
    e["tile_row"] = t.row;
    e["x"] = t.window.x;
    e["y"] = t.window.y;
    e["width"] = t.window.width;
    e["height"] = t.window.height;
    e["origin_x"] = t.transform.origin_x;
    e["origin_y"] = t.transform.origin_y;
    tiles.push_back(std::move(e));
  }
  doc["tiles"] = std::move(tiles);
  Emit(o.output, doc.dump(2) + "\n", out);
  return kExitOk;
}

int CmdAssess(const Options& o, std::ostream& err, const Environment& env) {
  const auto now = [&] { return env.clock ? env.clock() : std::chrono::system_clock::now(); };
  std::optional<std::chrono::system_clock::time_point> fixed;
  if (!o.clock.empty()) fixed = products::ParseRfc3339(o.clock);
  const auto started_at = fixed.value_or(now());

  Warnings warnings;
  const geo::GeoRaster raster = geo::OpenRaster(o.raster);
  for (auto& w : geo::ValidateGsd(raster)) warnings.push_back(std::move(w));
  const auto raw = LoadFootprints(o.footprints, &warnings);
  const auto fps = ForMode(raw, Mode(o));
  const auto truth = RegisteredAll(raw);
  const auto backend = MakeBackend(o.backend, o.seed, &truth, &raster.transform());

  assessment::AssessOptions opts;
  opts.tile_size = o.tile_size;
  opts.workers = o.workers;
  opts.min_pixels = o.min_pixels;
  opts.mode = o.vote ? assessment::ConsolidationMode::kVoteCount : assessment::ConsolidationMode::kScoreSum;
  opts.skip_empty_tiles = o.skip_empty;
  opts.pixel_budget_bytes = o.budget_mib << 20;
  auto run = assessment::AssessRun(raster, fps, *backend, opts);
  for (auto& w : run.warnings) warnings.push_back(std::move(w));

  const std::string run_id =
      !o.run_id.empty() ? o.run_id : fmt::format("run-{}", products::FormatRfc3339(started_at));
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  WriteFile(dir / "assessments.geojson",
            products::EmitGeoJson(run.assessments, fps, run_id, raster.crs_id()));
  WriteFile(dir / "assessments.csv", products::EmitCsv(run.assessments, o.csv_comment));

  products::RunReport report;
  report.run_id = run_id;
  report.started_at = started_at;
  report.finished_at = fixed ? *fixed : std::max(now(), started_at);
  report.wall_seconds = run.stats.wall_seconds;
  report.input_bytes = run.stats.input_bytes;
  report.tile_count = run.stats.tile_count;
  report.tiles_processed = run.stats.tiles_processed;
  report.building_count = static_cast<std::int64_t>(run.assessments.size());
  report.backend_name = run.stats.backend_name;
  report.gsd_m_per_px = raster.transform().pixel_width;
  report.peak_resident_bytes = run.stats.peak_resident_bytes;
  report.warnings = warnings;
  report.config = {{"raster", o.raster},         {"footprints", o.footprints},
                   {"backend", o.backend},       {"mode", o.mode},
                   {"tile_size", o.tile_size},   {"min_pixels", o.min_pixels},
                   {"seed", o.seed},             {"workers", o.workers},
                   {"consolidation", o.vote ? "vote" : "score_sum"},
                   {"skip_empty_tiles", o.skip_empty}, {"budget_mib", o.budget_mib}};
  WriteFile(dir / "run_report.json", products::ToJson(report).dump(2) + "\n");
  for (const Warning& w : warnings) err << "warning: " << w.code << ": " << w.message << "\n";
  return kExitOk;
}

int CmdInfer(const Options& o) {
  const geo::GeoRaster raster = geo::OpenRaster(o.raster);
  std::optional<std::vector<footprints::BuildingFootprint>> truth;
  if (!o.footprints.empty()) truth = RegisteredAll(LoadFootprints(o.footprints, nullptr));
  const auto backend =
      MakeBackend(o.backend, o.seed, truth ? &*truth : nullptr, &raster.transform());
  const geo::TileGrid grid = geo::MakeTileGrid(raster, o.tile_size);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  for (std::int64_t i = 0; i < grid.count(); ++i) {
    const geo::Tile tile = grid.At(i);
    std::vector<std::uint8_t> pixels;
    if (backend->needs_pixels()) pixels = raster.Read(tile.window);
    const auto scores = backend->Infer({tile, raster.bands(), pixels});
    inference::WriteScorePlane(
        scores, dir / inference::ScorePlaneFileName(static_cast<std::uint32_t>(tile.col),
                                                    static_cast<std::uint32_t>(tile.row)));
  }
  return kExitOk;
}

std::vector<assessment::BuildingAssessment> LoadAssessments(const std::string& path) {
  const std::string text = ReadFile(path);
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".csv") return products::ParseCsv(text);
  return products::ParseAssessmentGeoJson(text);
}

int CmdEvaluate(const Options& o, std::ostream& out) {
  const auto assessments = LoadAssessments(o.assessments);
  const auto truth = LoadFootprints(o.truth, nullptr);
  std::optional<evaluation::SplitManifest> manifest;
  std::optional<evaluation::Split> split;
  if (!o.manifest.empty()) {
    manifest = evaluation::ParseSplitManifest(ReadFile(o.manifest));
    (void)evaluation::SummarizeManifest(*manifest);
    split = evaluation::ParseSplit(o.split.empty() ? "test" : o.split);
    if (!split) throw Error(ErrorKind::kInvalidArgument, fmt::format("unknown split '{}'", o.split));
  }
  const auto report = evaluation::EvaluateRun(assessments, truth, Mode(o),
                                              manifest ? &*manifest : nullptr, split);
  Emit(o.output, evaluation::ToJson(report).dump(2) + "\n", out);
  return kExitOk;
}

int CmdPerturb(const Options& o, std::ostream& out) {
  const auto fps = LoadFootprints(o.footprints, nullptr);
  const auto result = alignment::Perturb(fps, o.dx, o.dy);
  const ordered_json meta = {{"perturbation", {{"dx", result.planted.dx}, {"dy", result.planted.dy}}}};
  Emit(o.output, footprints::EmitFootprints(result.footprints, meta), out);
  return kExitOk;
}

int CmdAlign(const Options& o, std::ostream& out) {
  const geo::GeoRaster raster = geo::OpenRaster(o.raster);
  const auto fps = LoadFootprints(o.footprints, nullptr);
  alignment::AlignmentSearchSpec spec;
  spec.window = o.window;
  spec.step = o.step;
  spec.objective = o.objective == "mask_correlation" ? alignment::Objective::kMaskCorrelation
                                                     : alignment::Objective::kConcentration;
  spec.retain_surface = o.surface;
  spec.tile_size = o.tile_size;
  spec.workers = o.workers;
  std::unique_ptr<inference::SegmentationBackend> backend;
  std::vector<footprints::BuildingFootprint> truth;
  if (spec.objective == alignment::Objective::kConcentration) {
    truth = RegisteredAll(fps);
    backend = MakeBackend(o.backend, o.seed, &truth, &raster.transform());
    spec.backend = backend.get();
  }
  const auto result = alignment::SearchAlignment(raster, fps, spec);
  Emit(o.output, alignment::ToJson(result, o.surface).dump(2) + "\n", out);
  if (!o.corrected.empty()) {
    const auto moved = alignment::Perturb(fps, result.best_offset.dx, result.best_offset.dy);
    WriteFile(o.corrected, footprints::EmitFootprints(moved.footprints));
  }
  return kExitOk;
}

int CmdSample(const Options& o, std::ostream& out) {
  const geo::GeoRaster raster = geo::OpenRaster(o.raster);
  const auto fps = ForMode(LoadFootprints(o.footprints, nullptr), Mode(o));
  const geo::TileGrid grid = geo::MakeTileGrid(raster, o.tile_size);
  assessment::SamplerSpec spec;
  spec.tiles = assessment::CountBuildingsPerTile(fps, grid, raster.transform());
  spec.sample_count = o.count;
  spec.seed = o.seed;
  if (!o.target.empty()) {
    if (o.target.size() != kNumClasses) {
      throw Error(ErrorKind::kInvalidArgument, "--target needs exactly 5 weights");
    }
    std::copy(o.target.begin(), o.target.end(), spec.target.begin());
  }
  Emit(o.output, assessment::EmitSampleManifest(assessment::WeightedTileSample(spec)), out);
  return kExitOk;
}

int CmdExport(const Options& o, std::ostream& out) {
  const std::string text = ReadFile(o.input);
  const auto assessments = products::ParseAssessmentGeoJson(text);
  if (o.format == "csv") {
    Emit(o.output, products::EmitCsv(assessments, o.csv_comment), out);
    return kExitOk;
  }
  const auto parsed = footprints::ParseFootprints(text);
  const auto doc = ordered_json::parse(text);
  const std::string run_id = !o.run_id.empty() ? o.run_id : doc.value("run_id", std::string());
  Emit(o.output,
       products::EmitGeoJson(assessments, parsed.footprints, run_id, doc.value("crs_id", std::string())),
       out);
  return kExitOk;
}

int ExitCodeFor(ErrorKind kind) {
  return kind == ErrorKind::kInvalidArgument ? kExitUsage : kExitData;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const Environment& env) {
  Options o;
  CLI::App app{"Building damage assessment pipeline for georeferenced sUAS orthomosaics",
               "suas_assess"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.add_option("--tile-size", o.tile_size, "Tile edge in pixels")
      ->check(CLI::Range(std::int64_t{1}, std::int64_t{1} << 20))
      ->capture_default_str();
  app.add_option("--min-pixels", o.min_pixels, "Pixels below which a building is low_coverage")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--seed", o.seed, "Seed for the random backend and the sampler")->capture_default_str();
  app.add_option("--workers", o.workers, "Worker threads")
      ->envname("SUAS_ASSESS_WORKERS")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  app.add_option("--mode", o.mode, "Footprint registration: aligned|unaligned")
      ->check(CLI::IsMember({"aligned", "unaligned"}))
      ->capture_default_str();
  app.add_option("--backend", o.backend, "replay|random|constant:<class>|scoredir:<path>")
      ->capture_default_str();

  auto* tile = app.add_subcommand("tile", "Emit the tile manifest of a raster");
  tile->add_option("--raster", o.raster, "Raster (.raw/.json sidecar or .png)")->required();
  tile->add_option("-o,--output", o.output, "Output file (default stdout)");

  auto* assess = app.add_subcommand("assess", "Raster + footprints + backend -> products");
  assess->add_option("--raster", o.raster)->required();
  assess->add_option("--footprints", o.footprints, "GeoJSON footprints")->required();
  assess->add_option("--out-dir", o.out_dir, "Directory for products and the run report")->required();
  assess->add_option("--run-id", o.run_id, "Fixed run id");
  assess->add_option("--clock", o.clock, "Fixed RFC 3339 UTC timestamp for the run report");
  assess->add_flag("--vote", o.vote, "Consolidate per-pixel argmax votes instead of score sums");
  assess->add_flag("--skip-empty-tiles", o.skip_empty, "Only infer tiles touched by footprints");
  assess->add_flag("--csv-comment", o.csv_comment, "Prefix the CSV with a schema comment line");
  assess->add_option("--budget-mib", o.budget_mib, "Resident tile buffer cap (MiB)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Write score planes for every tile");
  infer->add_option("--raster", o.raster)->required();
  infer->add_option("--footprints", o.footprints, "Labelled footprints (replay backend)");
  infer->add_option("--out-dir", o.out_dir)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Assessments + truth (+ manifest) -> EvalReport");
  evaluate->add_option("--assessments", o.assessments, "assessments.csv or assessments.geojson")->required();
  evaluate->add_option("--truth", o.truth, "Labelled footprints GeoJSON")->required();
  evaluate->add_option("--manifest", o.manifest, "Split manifest JSON");
  evaluate->add_option("--split", o.split, "train|val|test (default test)");
  evaluate->add_option("-o,--output", o.output);

  auto* perturb = app.add_subcommand("perturb", "Translate all footprints by (dx, dy) metres");
  perturb->add_option("--footprints", o.footprints)->required();
  perturb->add_option("--dx", o.dx)->required();
  perturb->add_option("--dy", o.dy)->required();
  perturb->add_option("-o,--output", o.output);

  auto* align = app.add_subcommand("align", "Grid-search the translation that registers footprints");
  align->add_option("--raster", o.raster)->required();
  align->add_option("--footprints", o.footprints)->required();
  align->add_option("--window", o.window, "Search half-width in metres")->capture_default_str();
  align->add_option("--step", o.step, "Grid step in metres")->capture_default_str();
  align->add_option("--objective", o.objective, "concentration|mask_correlation")
      ->check(CLI::IsMember({"concentration", "mask_correlation"}))
      ->capture_default_str();
  align->add_flag("--surface", o.surface, "Include the full objective surface");
  align->add_option("--write-footprints", o.corrected, "Write footprints shifted by the best offset");
  align->add_option("-o,--output", o.output);

  auto* sample = app.add_subcommand("sample", "Class-balanced weighted tile sampling manifest");
  sample->add_option("--raster", o.raster)->required();
  sample->add_option("--footprints", o.footprints)->required();
  sample->add_option("--count", o.count, "Number of draws")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--target", o.target, "Five class weights summing to 1")->delimiter(',');
  sample->add_option("-o,--output", o.output);

  auto* exp = app.add_subcommand("export", "Re-emit an assessment GeoJSON as csv or geojson");
  exp->add_option("--input", o.input, "assessments.geojson")->required();
  exp->add_option("--format", o.format, "csv|geojson")->check(CLI::IsMember({"csv", "geojson"}))->capture_default_str();
  exp->add_option("--run-id", o.run_id);
  exp->add_flag("--csv-comment", o.csv_comment);
  exp->add_option("-o,--output", o.output);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*tile) return CmdTile(o, out);
    if (*assess) return CmdAssess(o, err, env);
    if (*infer) return CmdInfer(o);
    if (*evaluate) return CmdEvaluate(o, out);
    if (*perturb) return CmdPerturb(o, out);
    if (*align) return CmdAlign(o, out);
    if (*sample) return CmdSample(o, out);
    if (*exp) return CmdExport(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io-error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace suas::cli
