#pragma once

#include <filesystem>
#include <string>

#include "suas/geo_raster.hpp"

namespace suas::geo {

// Raw container: interleaved 8-bit samples in `<stem>.raw` plus a JSON
// sidecar `<stem>.raw.json` (or `<stem>.json`) holding
// {width, height, bands, origin_x, origin_y, pixel_width, pixel_height, crs_id}
// and optionally `data_file`, a path relative to the sidecar.
GeoRaster LoadRawRaster(const std::filesystem::path& sidecar);

// Writes `<stem>.raw` and `<stem>.raw.json`; returns the sidecar path.
std::filesystem::path WriteRawRaster(const GeoRaster& raster, const std::filesystem::path& stem);

// Data file referenced by a sidecar (the `data_file` rule above).
std::filesystem::path RawDataPathFor(const std::filesystem::path& sidecar);

// ESRI world file: six lines (A, D, B, E, C, F) where C/F locate the centre
// of the top-left pixel. Non-zero rotation terms (D, B) are rejected.
GeoTransform ReadWorldFile(const std::filesystem::path& path);
void WriteWorldFile(const GeoTransform& transform, const std::filesystem::path& path);

// PNG (8-bit gray/RGB/RGBA; alpha dropped) plus world file (`.pgw`, `.pngw`
// or `.wld` next to it) and a `<stem>.crs` text file with the CRS id.
GeoRaster LoadPngRaster(const std::filesystem::path& png);
void WritePngRaster(const GeoRaster& raster, const std::filesystem::path& png);

// Dispatches on extension: `.png` → PNG, `.json`/`.raw` → raw container.
GeoRaster OpenRaster(const std::filesystem::path& path);

}  // namespace suas::geo
