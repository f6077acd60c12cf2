#include "suas/inference.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "suas/error.hpp"
#include "suas/simd/kernels.hpp"

namespace suas::inference {
namespace fs = std::filesystem;

ScorePlaneTile::ScorePlaneTile(std::uint32_t tile_col, std::uint32_t tile_row,
                               std::uint32_t width, std::uint32_t height)
    : tile_col_(tile_col),
      tile_row_(tile_row),
      width_(width),
      height_(height),
      scores_(static_cast<std::size_t>(width) * height * kNumClasses, 0.0f) {}

void ScorePlaneTile::Validate() const {
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    const float v = scores_[i];
    if (!std::isfinite(v) || v < 0.0f) {
      const std::size_t plane = plane_size();
      throw Error(ErrorKind::kFormat,
                  fmt::format("scores: value {} at class {} pixel {} is not finite and >= 0", v,
                              i / plane, i % plane));
    }
  }
}

bool operator==(const ScorePlaneTile& a, const ScorePlaneTile& b) {
  return a.tile_col_ == b.tile_col_ && a.tile_row_ == b.tile_row_ && a.width_ == b.width_ &&
         a.height_ == b.height_ && a.scores_.size() == b.scores_.size() &&
         std::memcmp(a.scores_.data(), b.scores_.data(), a.scores_.size() * sizeof(float)) == 0;
}

namespace {

ScorePlaneTile EmptyFor(const geo::Tile& tile) {
  return ScorePlaneTile(static_cast<std::uint32_t>(tile.col), static_cast<std::uint32_t>(tile.row),
                        static_cast<std::uint32_t>(tile.window.width),
                        static_cast<std::uint32_t>(tile.window.height));
}

class ReplayOracleBackend final : public SegmentationBackend {
 public:
  ReplayOracleBackend(std::vector<footprints::BuildingFootprint> footprints,
                      const geo::GeoTransform& transform)
      : footprints_(std::move(footprints)), transform_(transform) {
    bounds_.reserve(footprints_.size());
    for (const auto& f : footprints_) {
      if (!f.truth_label) {
        throw Error(ErrorKind::kInvalidArgument,
                    fmt::format("replay backend: footprint '{}' has no truth label", f.id));
      }
      bounds_.push_back(footprints::PixelBounds(f, transform_));
    }
  }

  std::string name() const override { return "replay"; }

  ScorePlaneTile Infer(const TileInput& input) const override {
    const geo::PixelWindow& window = input.tile.window;
    ScorePlaneTile out = EmptyFor(input.tile);
    // Winning severity rank per pixel; background is below every class.
    constexpr int kBackground = -2;
    std::vector<std::int8_t> rank(out.plane_size(), kBackground);
    std::vector<std::uint8_t> cls(out.plane_size(), 0);
    for (std::size_t i = 0; i < footprints_.size(); ++i) {
      if (geo::Intersect(bounds_[i], window).area() == 0) continue;
      const DamageClass label = *footprints_[i].truth_label;
      const int r = SeverityRank(label);
      const footprints::PixelMask mask = footprints::Rasterize(footprints_[i], transform_, window);
      mask.ForEachSpan([&](std::int64_t row, std::int64_t c0, std::int64_t c1) {
        const std::size_t base = static_cast<std::size_t>(row - window.y) * window.width;
        for (std::int64_t c = c0; c < c1; ++c) {
          const std::size_t p = base + static_cast<std::size_t>(c - window.x);
          if (r > rank[p]) {
            rank[p] = static_cast<std::int8_t>(r);
            cls[p] = static_cast<std::uint8_t>(Ordinal(label));
          }
        }
      });
    }
    for (std::size_t p = 0; p < cls.size(); ++p) out.plane(cls[p])[p] = 1.0f;
    return out;
  }

 private:
  std::vector<footprints::BuildingFootprint> footprints_;
  std::vector<geo::PixelWindow> bounds_;
  geo::GeoTransform transform_;
};

class UniformRandomBackend final : public SegmentationBackend {
 public:
  explicit UniformRandomBackend(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }

  ScorePlaneTile Infer(const TileInput& input) const override {
    ScorePlaneTile out = EmptyFor(input.tile);
    const auto& kernels = simd::ActiveKernels();
    for (int c = 0; c < kNumClasses; ++c) {
      float* plane = out.plane(c);
      for (std::uint32_t row = 0; row < out.height(); ++row) {
        const std::uint32_t key = RandomRowKey(seed_, out.tile_col(), out.tile_row(), c, row);
        kernels.fill_uniform(key, 0, plane + static_cast<std::size_t>(row) * out.width(),
                             out.width());
      }
    }
    return out;
  }

 private:
  std::uint64_t seed_;
};

class ConstantBackend final : public SegmentationBackend {
 public:
  explicit ConstantBackend(DamageClass cls) : cls_(cls) {}
  std::string name() const override { return fmt::format("constant:{}", ToString(cls_)); }

  ScorePlaneTile Infer(const TileInput& input) const override {
    ScorePlaneTile out = EmptyFor(input.tile);
    std::fill_n(out.plane(Ordinal(cls_)), out.plane_size(), 1.0f);
    return out;
  }

 private:
  DamageClass cls_;
};

class ScoreDirBackend final : public SegmentationBackend {
 public:
  explicit ScoreDirBackend(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) {
      throw Error(ErrorKind::kIo, fmt::format("score directory {} does not exist", dir_.string()));
    }
  }
  std::string name() const override { return fmt::format("scoredir:{}", dir_.string()); }
  bool needs_pixels() const override { return false; }

  ScorePlaneTile Infer(const TileInput& input) const override {
    const auto col = static_cast<std::uint32_t>(input.tile.col);
    const auto row = static_cast<std::uint32_t>(input.tile.row);
    const fs::path path = dir_ / ScorePlaneFileName(col, row);
    if (!fs::exists(path)) {
      throw Error(ErrorKind::kMissingScores,
                  fmt::format("no score plane for tile ({}, {}): {}", col, row, path.string()));
    }
    ScorePlaneTile tile = ReadScorePlane(path);
    if (tile.tile_col() != col || tile.tile_row() != row) {
      throw Error(ErrorKind::kFormat, fmt::format("{}: tile_col/tile_row ({}, {}) do not match",
                                                  path.string(), tile.tile_col(), tile.tile_row()));
    }
    if (tile.width() != input.tile.window.width || tile.height() != input.tile.window.height) {
      throw Error(ErrorKind::kFormat,
                  fmt::format("{}: width/height {}x{} do not match tile window {}x{}", path.string(),
                              tile.width(), tile.height(), input.tile.window.width,
                              input.tile.window.height));
    }
    return tile;
  }

 private:
  fs::path dir_;
};

constexpr std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint32_t RandomRowKey(std::uint64_t seed, std::uint32_t tile_col, std::uint32_t tile_row,
                           int cls, std::uint32_t row) {
  std::uint64_t k = SplitMix(seed);
  k = SplitMix(k ^ (static_cast<std::uint64_t>(tile_col) << 32 | tile_row));
  k = SplitMix(k ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cls)) << 32 | row));
  return static_cast<std::uint32_t>(k ^ (k >> 32));
}

std::unique_ptr<SegmentationBackend> MakeReplayOracleBackend(
    std::vector<footprints::BuildingFootprint> footprints, const geo::GeoTransform& transform) {
  return std::make_unique<ReplayOracleBackend>(std::move(footprints), transform);
}

std::unique_ptr<SegmentationBackend> MakeUniformRandomBackend(std::uint64_t seed) {
  return std::make_unique<UniformRandomBackend>(seed);
}

std::unique_ptr<SegmentationBackend> MakeConstantBackend(DamageClass cls) {
  return std::make_unique<ConstantBackend>(cls);
}

std::unique_ptr<SegmentationBackend> MakeScoreDirBackend(fs::path dir) {
  return std::make_unique<ScoreDirBackend>(std::move(dir));
}

// --- exchange format -------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'U', 'A', 'S', 'S', 'C', 'R', '1'};

void PutU32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t GetU32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t ScorePlaneFileSize(std::uint32_t width, std::uint32_t height) {
  return kScorePlaneHeaderBytes +
         static_cast<std::uint64_t>(width) * height * kNumClasses * sizeof(float);
}

std::string ScorePlaneFileName(std::uint32_t tile_col, std::uint32_t tile_row) {
  return fmt::format("scores_{}_{}.ssp", tile_col, tile_row);
}

std::vector<std::uint8_t> EncodeScorePlane(const ScorePlaneTile& tile) {
  std::vector<std::uint8_t> out(ScorePlaneFileSize(tile.width(), tile.height()), 0);
  std::memcpy(out.data(), kMagic, 8);
  const std::uint32_t fields[8] = {kScorePlaneVersion, tile.tile_col(), tile.tile_row(),
                                   tile.width(),       tile.height(),   tile.num_classes(),
                                   0 /*dtype*/,        0 /*reserved*/};
  for (int i = 0; i < 8; ++i) PutU32(out.data() + 8 + 4 * i, fields[i]);
  std::uint8_t* payload = out.data() + kScorePlaneHeaderBytes;
  const auto scores = tile.scores();
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(payload, scores.data(), scores.size_bytes());
  } else {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      PutU32(payload + 4 * i, std::bit_cast<std::uint32_t>(scores[i]));
    }
  }
  return out;
}

ScorePlaneTile DecodeScorePlane(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kScorePlaneHeaderBytes) {
    throw Error(ErrorKind::kLength,
                fmt::format("score plane is {} bytes, shorter than the 64-byte header", bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorKind::kFormat, "magic: expected \"SUASSCR1\"");
  }
  const std::uint8_t* h = bytes.data() + 8;
  const std::uint32_t version = GetU32(h);
  const std::uint32_t tile_col = GetU32(h + 4);
  const std::uint32_t tile_row = GetU32(h + 8);
  const std::uint32_t width = GetU32(h + 12);
  const std::uint32_t height = GetU32(h + 16);
  const std::uint32_t num_classes = GetU32(h + 20);
  const std::uint32_t dtype = GetU32(h + 24);
  const std::uint32_t reserved = GetU32(h + 28);
  if (version != kScorePlaneVersion) {
    throw Error(ErrorKind::kFormat, fmt::format("version: expected 1, got {}", version));
  }
  if (width == 0) throw Error(ErrorKind::kFormat, "width: must be >= 1");
  if (height == 0) throw Error(ErrorKind::kFormat, "height: must be >= 1");
  if (num_classes != kNumClasses) {
    throw Error(ErrorKind::kFormat, fmt::format("num_classes: expected 5, got {}", num_classes));
  }
  if (dtype != 0) throw Error(ErrorKind::kFormat, fmt::format("dtype: expected 0, got {}", dtype));
  if (reserved != 0) throw Error(ErrorKind::kFormat, "reserved: must be 0");
  for (std::size_t i = 40; i < kScorePlaneHeaderBytes; ++i) {
    if (bytes[i] != 0) throw Error(ErrorKind::kFormat, "padding: header bytes 40..63 must be zero");
  }
  const std::uint64_t expected = ScorePlaneFileSize(width, height);
  if (bytes.size() < expected) {
    throw Error(ErrorKind::kLength, fmt::format("payload truncated: {} bytes, expected {} for width {} x height {}",
                                                bytes.size(), expected, width, height));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::kLength,
                fmt::format("{} trailing bytes after payload for width {} x height {}",
                            bytes.size() - expected, width, height));
  }
  ScorePlaneTile tile(tile_col, tile_row, width, height);
  const std::uint8_t* payload = bytes.data() + kScorePlaneHeaderBytes;
  auto scores = tile.scores();
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(scores.data(), payload, scores.size_bytes());
  } else {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = std::bit_cast<float>(GetU32(payload + 4 * i));
    }
  }
  tile.Validate();
  return tile;
}

void WriteScorePlane(const ScorePlaneTile& tile, const fs::path& path) {
  tile.Validate();
  const auto bytes = EncodeScorePlane(tile);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, fmt::format("short write to {}", path.string()));
}

ScorePlaneTile ReadScorePlane(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  try {
    return DecodeScorePlane(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.detail()));
  }
}

}  // namespace suas::inference
