#include <atomic>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "scene.hpp"
#include "suas/assessment.hpp"
#include "suas/error.hpp"
#include "suas/memory_budget.hpp"

namespace suas::assessment {
namespace {

using inference::ScorePlaneTile;
using inference::SegmentationBackend;
using inference::TileInput;
using testing::Block;
using testing::BlockFootprint;

const geo::GeoTransform kT{0.0, 0.0, 1.0, -1.0};

ScorePlaneTile OneHot(const geo::Tile& tile, int cls) {
  ScorePlaneTile s(tile.col, tile.row, tile.window.width, tile.window.height);
  std::fill_n(s.plane(cls), s.plane_size(), 1.0f);
  return s;
}

// Multiplies another backend's scores by a constant.
class ScaledBackend final : public SegmentationBackend {
 public:
  ScaledBackend(const SegmentationBackend& inner, float k) : inner_(inner), k_(k) {}
  std::string name() const override { return "scaled"; }
  ScorePlaneTile Infer(const TileInput& in) const override {
    auto s = inner_.Infer(in);
    for (float& v : s.scores()) v *= k_;
    return s;
  }

 private:
  const SegmentationBackend& inner_;
  float k_;
};

// Fails on one tile, after a delay so other workers make progress.
class FailingBackend final : public SegmentationBackend {
 public:
  std::string name() const override { return "failing"; }
  ScorePlaneTile Infer(const TileInput& in) const override {
    if (in.tile.col == 1 && in.tile.row == 1) throw Error(ErrorKind::kBackend, "boom");
    return OneHot(in.tile, 0);
  }
};

// Records the maximum number of concurrent Infer calls; declares itself serial.
class SerialBackend final : public SegmentationBackend {
 public:
  std::string name() const override { return "serial"; }
  bool thread_safe() const override { return false; }
  ScorePlaneTile Infer(const TileInput& in) const override {
    const int now = ++active_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
    --active_;
    return OneHot(in.tile, 1);
  }
  int peak() const { return peak_.load(); }

 private:
  mutable std::atomic<int> active_{0};
  mutable std::atomic<int> peak_{0};
};

TEST(ArgmaxWithTieRule, StrictMaximum) {
  bool tied = true;
  EXPECT_EQ(ArgmaxWithTieRule({0, 0, 0, 10, 0}, &tied), DamageClass::kDestroyed);
  EXPECT_FALSE(tied);
}

TEST(ArgmaxWithTieRule, TiesGoToMoreSevere) {
  bool tied = false;
  EXPECT_EQ(ArgmaxWithTieRule({1.2, 3.4, 3.4, 0.5, 0.0}, &tied), DamageClass::kMajorDamage);
  EXPECT_TRUE(tied);
  EXPECT_EQ(ArgmaxWithTieRule({2, 0, 0, 0, 2}, &tied), DamageClass::kNoDamage);
  EXPECT_TRUE(tied);
  EXPECT_EQ(ArgmaxWithTieRule({1, 1, 1, 1, 1}, &tied), DamageClass::kDestroyed);
  EXPECT_EQ(ArgmaxWithTieRule({0, 0, 0, 0, 3}, &tied), DamageClass::kUnClassified);
  EXPECT_FALSE(tied);
}

TEST(Consolidate, TenPixelsDestroyed) {
  const geo::TileGrid grid(10, 10, 10, kT);
  const auto f = BlockFootprint(kT, {0, 0, 5, 2}, "a");
  const geo::Tile tile = grid.At(0);
  const ScorePlaneTile s = OneHot(tile, 3);
  const MaskFragment frag{tile, footprints::Rasterize(f, kT, tile.window)};
  const auto a = Consolidate("a", std::span(&frag, 1), [&](auto, auto) { return &s; });
  EXPECT_EQ(a.class_sums, (ClassSums{0, 0, 0, 10, 0}));
  EXPECT_EQ(a.pixel_count, 10);
  EXPECT_EQ(a.predicted, DamageClass::kDestroyed);
  EXPECT_EQ(a.flags, 0);
}

TEST(Consolidate, TieBrokenFlag) {
  Accumulator acc;
  acc.sums = {1.2, 3.4, 3.4, 0.5, 0.0};
  acc.pixel_count = 4;
  const auto a = Finalize("t", acc, 1);
  EXPECT_EQ(a.predicted, DamageClass::kMajorDamage);
  EXPECT_TRUE(a.has(kTieBroken));
}

TEST(Consolidate, StraddlingBuildingMatchesMergedBruteForce) {
  const geo::TileGrid grid(10, 5, 5, kT);
  const auto f = BlockFootprint(kT, {2, 0, 5, 2}, "s");
  const ScorePlaneTile a = OneHot(grid.At(0), 1);
  const ScorePlaneTile b = OneHot(grid.At(1), 2);
  std::vector<MaskFragment> frags;
  for (std::int64_t i = 0; i < 2; ++i) {
    frags.push_back({grid.At(i), footprints::Rasterize(f, kT, grid.At(i).window)});
  }
  EXPECT_EQ(frags[0].mask.Count(), 6);
  EXPECT_EQ(frags[1].mask.Count(), 4);
  const auto lookup = [&](std::int64_t c, std::int64_t) { return c == 0 ? &a : &b; };
  const auto got = Consolidate("s", frags, lookup);
  EXPECT_EQ(got.class_sums, (ClassSums{0, 6, 4, 0, 0}));
  EXPECT_EQ(got.predicted, DamageClass::kMinorDamage);

  // Brute force over the whole mask.
  const auto whole = testing::BruteForceMask(f, kT, {0, 0, 10, 5});
  ClassSums brute{};
  for (std::int64_t r = 0; r < 5; ++r) {
    for (std::int64_t c = 0; c < 10; ++c) {
      if (!whole.Test(c, r)) continue;
      const ScorePlaneTile& s = c < 5 ? a : b;
      for (int k = 0; k < kNumClasses; ++k) brute[k] += s.at(k, r, c % 5);
    }
  }
  EXPECT_EQ(got.class_sums, brute);
}

TEST(Consolidate, FlagsForLowAndZeroCoverage) {
  Accumulator acc;
  acc.sums = {0, 2, 0, 0, 0};
  acc.pixel_count = 2;
  const auto low = Finalize("l", acc, 5);
  EXPECT_TRUE(low.has(kLowCoverage));
  EXPECT_EQ(low.predicted, DamageClass::kMinorDamage);
  const auto none = Finalize("z", Accumulator{}, 1);
  EXPECT_TRUE(none.has(kOffRaster));
  EXPECT_TRUE(none.has(kLowCoverage));
  EXPECT_EQ(none.predicted, DamageClass::kUnClassified);
}

TEST(Consolidate, MissingScoresNamesTile) {
  const geo::TileGrid grid(10, 5, 5, kT);
  const auto f = BlockFootprint(kT, {2, 0, 5, 2}, "s");
  const ScorePlaneTile a = OneHot(grid.At(0), 1);
  std::vector<MaskFragment> frags;
  for (std::int64_t i = 0; i < 2; ++i) {
    frags.push_back({grid.At(i), footprints::Rasterize(f, kT, grid.At(i).window)});
  }
  try {
    Consolidate("s", frags, [&](std::int64_t c, std::int64_t) { return c == 0 ? &a : nullptr; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingScores);
    EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos) << e.what();
  }
}

TEST(Consolidate, VoteCountMode) {
  const geo::TileGrid grid(4, 1, 4, kT);
  const auto f = BlockFootprint(kT, {0, 0, 4, 1}, "v");
  ScorePlaneTile s(0, 0, 4, 1);
  // Three pixels vote minor by a hair; one pixel has a huge destroyed score.
  for (std::uint32_t c = 0; c < 3; ++c) {
    s.at(1, 0, c) = 0.6f;
    s.at(3, 0, c) = 0.5f;
  }
  s.at(3, 0, 3) = 100.0f;
  const MaskFragment frag{grid.At(0), footprints::Rasterize(f, kT, grid.At(0).window)};
  const auto lookup = [&](auto, auto) { return &s; };
  EXPECT_EQ(Consolidate("v", std::span(&frag, 1), lookup).predicted, DamageClass::kDestroyed);
  const auto votes = Consolidate("v", std::span(&frag, 1), lookup, {1, ConsolidationMode::kVoteCount});
  EXPECT_EQ(votes.class_sums, (ClassSums{0, 3, 0, 1, 0}));
  EXPECT_EQ(votes.predicted, DamageClass::kMinorDamage);
}

TEST(AssessRun, OracleReproducesTruth) {
  const auto scene = testing::LatticeScene(50, 6, 3, 0.05);
  const auto backend = inference::MakeReplayOracleBackend(scene.footprints, scene.raster.transform());
  AssessOptions opts;
  opts.tile_size = 16;
  const auto run = AssessRun(scene.raster, scene.footprints, *backend, opts);
  ASSERT_EQ(run.assessments.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(run.assessments[i].building_id, scene.footprints[i].id);
    EXPECT_EQ(run.assessments[i].predicted, scene.footprints[i].truth_label);
    EXPECT_EQ(run.assessments[i].pixel_count, 36);
  }
  EXPECT_EQ(run.stats.building_count, 50);
  EXPECT_EQ(run.stats.backend_name, "replay");
  const geo::TileGrid grid = geo::MakeTileGrid(scene.raster, 16);
  EXPECT_EQ(run.stats.tile_count, grid.count());
  EXPECT_EQ(run.stats.tiles_processed, grid.count());
  EXPECT_EQ(run.stats.input_bytes, scene.raster.payload_bytes());
}

TEST(AssessRun, EmptyFootprints) {
  const auto scene = testing::LatticeScene(4, 4, 2, 0.05);
  const auto backend = inference::MakeConstantBackend(DamageClass::kNoDamage);
  const auto run = AssessRun(scene.raster, {}, *backend, {});
  EXPECT_TRUE(run.assessments.empty());
  EXPECT_EQ(run.stats.building_count, 0);
}

TEST(AssessRun, OffRasterBuildingsAreKeptAndFlagged) {
  auto scene = testing::LatticeScene(4, 4, 2, 0.05);
  scene.footprints.push_back(BlockFootprint(scene.raster.transform(), {500, 500, 3, 3}, "far"));
  const auto backend = inference::MakeConstantBackend(DamageClass::kDestroyed);
  const auto run = AssessRun(scene.raster, scene.footprints, *backend, {});
  ASSERT_EQ(run.assessments.size(), 5u);
  EXPECT_TRUE(run.assessments[4].has(kOffRaster));
  EXPECT_EQ(run.assessments[4].predicted, DamageClass::kUnClassified);
}

TEST(AssessRun, IdenticalAcrossWorkerCounts) {
  const auto scene = testing::LatticeScene(120, 7, 2, 0.05);
  const auto backend = inference::MakeUniformRandomBackend(5);
  AssessOptions opts;
  opts.tile_size = 13;
  opts.workers = 1;
  const auto one = AssessRun(scene.raster, scene.footprints, *backend, opts);
  for (int w : {4, 8}) {
    opts.workers = w;
    const auto many = AssessRun(scene.raster, scene.footprints, *backend, opts);
    EXPECT_EQ(one.assessments, many.assessments) << w;
  }
}

TEST(AssessRun, TileSplitInvariance) {
  const auto scene = testing::LatticeScene(60, 9, 1, 0.05);
  const auto backend = inference::MakeUniformRandomBackend(77);
  AssessOptions opts;
  opts.tile_size = 4096;
  const auto whole = AssessRun(scene.raster, scene.footprints, *backend, opts);
  for (std::int64_t ts : {1, 3, 5, 8, 17}) {
    opts.tile_size = ts;
    const auto split = AssessRun(scene.raster, scene.footprints, *backend, opts);
    ASSERT_EQ(split.assessments.size(), whole.assessments.size());
    for (std::size_t i = 0; i < whole.assessments.size(); ++i) {
      EXPECT_EQ(split.assessments[i].pixel_count, whole.assessments[i].pixel_count);
      // The random backend keys scores on tile identity, so compare only the
      // pixel sets here; exact sums are checked with a tile-independent backend below.
    }
  }
  const auto oracle = inference::MakeReplayOracleBackend(scene.footprints, scene.raster.transform());
  opts.tile_size = 4096;
  const auto ref = AssessRun(scene.raster, scene.footprints, *oracle, opts);
  for (std::int64_t ts : {1, 3, 5, 8, 17}) {
    opts.tile_size = ts;
    EXPECT_EQ(AssessRun(scene.raster, scene.footprints, *oracle, opts).assessments, ref.assessments);
  }
}

TEST(AssessRun, ScalingLeavesLabelsUnchanged) {
  const auto scene = testing::LatticeScene(80, 5, 1, 0.05);
  const auto base = inference::MakeUniformRandomBackend(3);
  AssessOptions opts;
  opts.tile_size = 32;
  const auto ref = AssessRun(scene.raster, scene.footprints, *base, opts);
  for (float k : {0.5f, 2.0f, 10.0f}) {
    const ScaledBackend scaled(*base, k);
    const auto run = AssessRun(scene.raster, scene.footprints, scaled, opts);
    for (std::size_t i = 0; i < ref.assessments.size(); ++i) {
      EXPECT_EQ(run.assessments[i].predicted, ref.assessments[i].predicted);
      EXPECT_EQ(run.assessments[i].flags, ref.assessments[i].flags);
    }
  }
}

TEST(AssessRun, FailureEmitsNothing) {
  const auto scene = testing::LatticeScene(30, 5, 2, 0.05);
  const FailingBackend backend;
  AssessOptions opts;
  opts.tile_size = 10;
  opts.workers = 4;
  try {
    AssessRun(scene.raster, scene.footprints, backend, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBackend);
  }
}

TEST(AssessRun, SerialBackendIsNeverCalledConcurrently) {
  const auto scene = testing::LatticeScene(30, 5, 2, 0.05);
  const SerialBackend backend;
  AssessOptions opts;
  opts.tile_size = 8;
  opts.workers = 8;
  const auto run = AssessRun(scene.raster, scene.footprints, backend, opts);
  EXPECT_EQ(backend.peak(), 1);
  for (const auto& a : run.assessments) EXPECT_EQ(a.predicted, DamageClass::kMinorDamage);
}

TEST(AssessRun, SkipEmptyTilesAndMissingScoreFiles) {
  const auto dir = testing::TempDir("assess_scoredir");
  const geo::GeoTransform t = testing::SceneTransform(0.05);
  const auto scene = testing::RenderScene(40, 40, t, {{2, 2, 4, 4, DamageClass::kMajorDamage}});
  const geo::TileGrid grid = geo::MakeTileGrid(scene.raster, 10);
  inference::WriteScorePlane(OneHot(grid.At(0), 2), dir / inference::ScorePlaneFileName(0, 0));
  const auto backend = inference::MakeScoreDirBackend(dir);
  AssessOptions opts;
  opts.tile_size = 10;
  opts.skip_empty_tiles = true;
  const auto run = AssessRun(scene.raster, scene.footprints, *backend, opts);
  EXPECT_EQ(run.assessments[0].predicted, DamageClass::kMajorDamage);
  EXPECT_LT(run.stats.tiles_processed, run.stats.tile_count);
  EXPECT_EQ(run.stats.input_bytes, 0u);  // score replay never reads imagery
}

TEST(MemoryBudget, BlocksUntilReleased) {
  MemoryBudget budget(100);
  budget.Acquire(60);
  std::atomic<bool> got{false};
  std::thread t([&] {
    budget.Acquire(50);
    got = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_FALSE(got.load());
  budget.Release(60);
  t.join();
  EXPECT_TRUE(got.load());
  EXPECT_EQ(budget.in_use(), 50u);
  EXPECT_EQ(budget.peak(), 60u);
  EXPECT_THROW(budget.Acquire(101), Error);
}

TEST(AssessRun, ResidentBytesStayUnderCap) {
  const auto scene = testing::LatticeScene(40, 6, 2, 0.05);
  const auto backend = inference::MakeUniformRandomBackend(1);
  const std::uint64_t per_tile = TileResidentBytes({0, 0, 16, 16}, 3);
  EXPECT_EQ(per_tile, 16u * 16u * 3u + 16u * 16u * 5u * 4u);
  MemoryBudget budget(per_tile * 2);
  AssessOptions opts;
  opts.tile_size = 16;
  opts.workers = 8;
  opts.budget = &budget;
  const auto run = AssessRun(scene.raster, scene.footprints, *backend, opts);
  EXPECT_LE(budget.peak(), budget.cap());
  EXPECT_EQ(run.stats.peak_resident_bytes, budget.peak());
  opts.budget = nullptr;
  opts.pixel_budget_bytes = per_tile - 1;
  EXPECT_THROW(AssessRun(scene.raster, scene.footprints, *backend, opts), Error);
}

}  // namespace
}  // namespace suas::assessment
