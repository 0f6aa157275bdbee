#include "mtmask/raster.hpp"

#include <cmath>

namespace mtmask {

std::optional<MaskKind> parse_mask_name(std::string_view name) {
  for (int i = 0; i < kMaskCount; ++i)
    if (kMaskNames[i] == name) return kAllMasks[i];
  return std::nullopt;
}

TileStack::TileStack(int w, int h, double pixel_size_m) : width(w), height(h), pixel_size(pixel_size_m), valid(w, h, 1) {
  if (w <= 0 || h <= 0) throw DataError("tile dimensions must be positive");
  for (auto& b : bands) b = FloatPlane(w, h, 0.0f);
}

void TileStack::check() const {
  if (width <= 0 || height <= 0) throw DataError("tile dimensions must be positive");
  if (valid.width != width || valid.height != height) throw DataError("valid plane does not match tile dimensions");
  for (int b = 0; b < kBandCount; ++b) {
    const auto& p = bands[b];
    if (p.width != width || p.height != height)
      throw DataError("band '" + std::string(kBandNames[b]) + "' does not match tile dimensions");
    for (std::size_t i = 0; i < p.size(); ++i)
      if (valid.values[i] && !std::isfinite(p.values[i]))
        throw DataError("non-finite value in band '" + std::string(kBandNames[b]) + "' at a valid pixel");
  }
}

MaskSet::MaskSet(int w, int h) {
  for (auto& p : planes) p = MaskPlane(w, h, 0);
}

void MaskSet::check() const {
  for (int m = 0; m < kMaskCount; ++m) {
    const auto& p = planes[m];
    if (!p.same_shape(planes[0])) throw DataError("mask planes do not share dimensions");
    for (auto v : p.values)
      if (v > 1) throw DataError("mask '" + std::string(kMaskNames[m]) + "' holds a non-binary value");
  }
}

void Dem::check() const {
  if (elevation.width <= 0 || elevation.height <= 0) throw DataError("DEM dimensions must be positive");
  if (!(pixel_size > 0.0)) throw DataError("DEM pixel size must be positive");
  for (float z : elevation.values)
    if (!std::isfinite(z)) throw DataError("non-finite DEM elevation");
}

double mask_fraction(const MaskPlane& mask, const MaskPlane& valid) {
  if (!mask.same_shape(valid)) throw DataError("mask and valid plane dimensions differ");
  std::size_t n = 0, set = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!valid.values[i]) continue;
    ++n;
    set += mask.values[i] ? 1 : 0;
  }
  if (n == 0) throw DataError("no valid pixels");
  return static_cast<double>(set) / static_cast<double>(n);
}

}  // namespace mtmask
