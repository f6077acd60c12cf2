#include "suas/raster_io.hpp"

#include <fcntl.h>
#include <png.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "suas/error.hpp"

namespace suas::geo {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// pread-backed reader; concurrent non-overlapping reads are safe.
class RawFileSource final : public PixelSource {
 public:
  RawFileSource(const fs::path& path, std::int64_t width, int bands)
      : path_(path), width_(width), bands_(bands) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) {
      throw Error(ErrorKind::kIo,
                  fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
    }
  }
  ~RawFileSource() override { ::close(fd_); }
  RawFileSource(const RawFileSource&) = delete;
  RawFileSource& operator=(const RawFileSource&) = delete;

  void Read(const PixelWindow& window, std::span<std::uint8_t> out) const override {
    const std::size_t row_bytes = static_cast<std::size_t>(window.width) * bands_;
    for (std::int64_t r = 0; r < window.height; ++r) {
      const off_t offset =
          static_cast<off_t>(((window.y + r) * width_ + window.x) * bands_);
      std::size_t done = 0;
      while (done < row_bytes) {
        const ssize_t n = ::pread(fd_, out.data() + r * row_bytes + done, row_bytes - done,
                                  offset + static_cast<off_t>(done));
        if (n <= 0) {
          throw Error(ErrorKind::kIo, fmt::format("short read from {}", path_.string()));
        }
        done += static_cast<std::size_t>(n);
      }
    }
  }

 private:
  fs::path path_;
  std::int64_t width_;
  int bands_;
  int fd_ = -1;
};

template <typename T>
T Require(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) {
    throw Error(ErrorKind::kFormat, fmt::format("{}: missing key '{}'", where.string(), key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kFormat, fmt::format("{}: bad value for '{}'", where.string(), key));
  }
}

}  // namespace

fs::path RawDataPathFor(const fs::path& sidecar) {
  fs::path data = sidecar;
  data.replace_extension();
  if (data.extension() != ".raw") data += ".raw";
  return data;
}

GeoRaster LoadRawRaster(const fs::path& sidecar) {
  json meta;
  try {
    meta = json::parse(ReadText(sidecar));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParse, fmt::format("{}: {}", sidecar.string(), e.what()));
  }
  const auto width = Require<std::int64_t>(meta, "width", sidecar);
  const auto height = Require<std::int64_t>(meta, "height", sidecar);
  const auto bands = Require<int>(meta, "bands", sidecar);
  GeoTransform t{Require<double>(meta, "origin_x", sidecar), Require<double>(meta, "origin_y", sidecar),
                 Require<double>(meta, "pixel_width", sidecar),
                 Require<double>(meta, "pixel_height", sidecar)};
  for (const char* key : {"rotation_x", "rotation_y"}) {
    if (meta.contains(key) && meta[key].get<double>() != 0.0) {
      throw Error(ErrorKind::kFormat,
                  fmt::format("{}: rotated rasters are not supported", sidecar.string()));
    }
  }
  const auto crs = meta.value("crs_id", std::string("unknown"));
  fs::path data = meta.contains("data_file")
                      ? sidecar.parent_path() / meta["data_file"].get<std::string>()
                      : RawDataPathFor(sidecar);
  std::error_code ec;
  const auto size = fs::file_size(data, ec);
  if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot stat {}", data.string()));
  const auto expected = static_cast<std::uintmax_t>(width * height * bands);
  if (size != expected) {
    throw Error(ErrorKind::kLength, fmt::format("{} holds {} bytes, sidecar implies {}",
                                                data.string(), size, expected));
  }
  auto source = std::make_shared<RawFileSource>(data, width, bands);
  return GeoRaster(width, height, bands, t, crs, std::move(source));
}

fs::path WriteRawRaster(const GeoRaster& raster, const fs::path& stem) {
  fs::path data = stem;
  data += ".raw";
  fs::path sidecar = data;
  sidecar += ".json";
  std::ofstream out(data, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", data.string()));
  const std::int64_t rows_per_chunk = std::max<std::int64_t>(1, (1 << 24) / (raster.width() * raster.bands()));
  for (std::int64_t y = 0; y < raster.height(); y += rows_per_chunk) {
    const std::int64_t h = std::min(rows_per_chunk, raster.height() - y);
    const auto chunk = raster.Read({0, y, raster.width(), h});
    out.write(reinterpret_cast<const char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
  }
  const GeoTransform& t = raster.transform();
  const json meta = {{"width", raster.width()},       {"height", raster.height()},
                     {"bands", raster.bands()},       {"origin_x", t.origin_x},
                     {"origin_y", t.origin_y},        {"pixel_width", t.pixel_width},
                     {"pixel_height", t.pixel_height}, {"crs_id", raster.crs_id()}};
  std::ofstream(sidecar) << meta.dump(2) << "\n";
  return sidecar;
}

GeoTransform ReadWorldFile(const fs::path& path) {
  std::istringstream in(ReadText(path));
  double v[6];
  for (double& x : v) {
    if (!(in >> x)) {
      throw Error(ErrorKind::kFormat, fmt::format("{}: expected six numeric lines", path.string()));
    }
  }
  if (v[1] != 0.0 || v[2] != 0.0) {
    throw Error(ErrorKind::kFormat,
                fmt::format("{}: rotation terms must be zero", path.string()));
  }
  // Centre-of-pixel reference to corner reference.
  GeoTransform t{v[4] - v[0] / 2.0, v[5] - v[3] / 2.0, v[0], v[3]};
  t.Validate();
  return t;
}

void WriteWorldFile(const GeoTransform& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  out << fmt::format("{}\n0\n0\n{}\n{}\n{}\n", t.pixel_width, t.pixel_height,
                     t.origin_x + t.pixel_width / 2.0, t.origin_y + t.pixel_height / 2.0);
}

namespace {

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngReadGuard() {
    if (png != nullptr) png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngWriteGuard() {
    if (png != nullptr) png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

fs::path FindWorldFile(const fs::path& png) {
  for (const char* ext : {".pgw", ".pngw", ".wld"}) {
    fs::path candidate = png;
    candidate.replace_extension(ext);
    if (fs::exists(candidate)) return candidate;
  }
  throw Error(ErrorKind::kIo, fmt::format("no world file (.pgw/.pngw/.wld) next to {}", png.string()));
}

}  // namespace

GeoRaster LoadPngRaster(const fs::path& path) {
  PngReadGuard g;
  g.file = std::fopen(path.c_str(), "rb");
  if (g.file == nullptr) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, g.file) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorKind::kFormat, fmt::format("{} is not a PNG file", path.string()));
  }
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  g.info = png_create_info_struct(g.png);
  if (setjmp(png_jmpbuf(g.png))) {
    throw Error(ErrorKind::kFormat, fmt::format("{}: corrupt PNG", path.string()));
  }
  png_init_io(g.png, g.file);
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);
  png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  png_set_palette_to_rgb(g.png);
  png_set_expand_gray_1_2_4_to_8(g.png);
  png_read_update_info(g.png, g.info);
  const std::int64_t width = png_get_image_width(g.png, g.info);
  const std::int64_t height = png_get_image_height(g.png, g.info);
  const int bands = png_get_channels(g.png, g.info);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width * height * bands));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (std::int64_t y = 0; y < height; ++y) rows[y] = pixels.data() + y * width * bands;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);

  const GeoTransform t = ReadWorldFile(FindWorldFile(path));
  fs::path crs_path = path;
  crs_path.replace_extension(".crs");
  std::string crs = "unknown";
  if (fs::exists(crs_path)) {
    std::istringstream in(ReadText(crs_path));
    in >> crs;
  }
  return GeoRaster::FromPixels(width, height, bands, t, crs, std::move(pixels));
}

void WritePngRaster(const GeoRaster& raster, const fs::path& path) {
  if (raster.bands() != 1 && raster.bands() != 3) {
    throw Error(ErrorKind::kInvalidArgument, "PNG output supports 1 or 3 bands");
  }
  const auto pixels = raster.Read(raster.extent());
  PngWriteGuard g;
  g.file = std::fopen(path.c_str(), "wb");
  if (g.file == nullptr) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  g.info = png_create_info_struct(g.png);
  if (setjmp(png_jmpbuf(g.png))) {
    throw Error(ErrorKind::kIo, fmt::format("{}: PNG encoding failed", path.string()));
  }
  png_init_io(g.png, g.file);
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(raster.width()),
               static_cast<png_uint_32>(raster.height()), 8,
               raster.bands() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  const std::size_t stride = static_cast<std::size_t>(raster.width()) * raster.bands();
  for (std::int64_t y = 0; y < raster.height(); ++y) {
    png_write_row(g.png, const_cast<png_bytep>(pixels.data() + y * stride));
  }
  png_write_end(g.png, nullptr);

  fs::path world = path;
  world.replace_extension(".pgw");
  WriteWorldFile(raster.transform(), world);
  fs::path crs = path;
  crs.replace_extension(".crs");
  std::ofstream(crs) << raster.crs_id() << "\n";
}

GeoRaster OpenRaster(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kIo, fmt::format("no such file: {}", path.string()));
  }
  const std::string ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return LoadPngRaster(path);
  if (ext == ".raw") {
    fs::path sidecar = path;
    sidecar += ".json";
    return LoadRawRaster(sidecar);
  }
  return LoadRawRaster(path);
}

}  // namespace suas::geo
