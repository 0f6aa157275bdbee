#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmask/raster.hpp"

namespace mtmask {

using ordered_json = nlohmann::ordered_json;

/// A JSON header line, '\n', then a raw little-endian f32 payload. Shared by
/// raster files and checkpoints.
struct Envelope {
  ordered_json header;
  std::vector<float> payload;
};

void write_envelope(const std::filesystem::path& path, const ordered_json& header, std::span<const float> payload);
/// Reads the header and the whole payload. The caller validates the payload
/// length against the header.
Envelope read_envelope(const std::filesystem::path& path);

/// Named float planes sharing one grid: the in-memory image of a `.mtile` file.
struct PlaneStack {
  int width = 0;
  int height = 0;
  double pixel_size = 30.0;
  std::vector<std::string> names;
  std::vector<FloatPlane> planes;

  const FloatPlane* find(std::string_view name) const;
};

void save_planes(const std::filesystem::path& path, const PlaneStack& stack);
PlaneStack load_planes(const std::filesystem::path& path);

/// Bands in fixed order followed by a "valid" plane (0.0 / 1.0).
void save_tile(const TileStack& tile, const std::filesystem::path& path);
TileStack load_tile(const std::filesystem::path& path);

void save_masks(const MaskSet& masks, const std::filesystem::path& path, double pixel_size = 30.0);
MaskSet load_masks(const std::filesystem::path& path);

/// Single-plane mask file, e.g. a baseline water mask or a fused good-water mask.
void save_mask(const MaskPlane& mask, std::string_view name, const std::filesystem::path& path,
               double pixel_size = 30.0);
MaskPlane load_mask(const std::filesystem::path& path, std::string_view name);

void save_dem(const Dem& dem, const std::filesystem::path& path);
Dem load_dem(const std::filesystem::path& path);

FloatPlane to_float(const MaskPlane& mask);
/// Throws FormatError unless every value is exactly 0.0 or 1.0.
MaskPlane to_mask(const FloatPlane& plane, std::string_view name);

}  // namespace mtmask
