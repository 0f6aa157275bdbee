#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtmask/error.hpp"

namespace mtmask {

/// Row-major 2-D grid.
template <typename T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  Plane() = default;
  Plane(int w, int h, T fill = T{}) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw DataError("negative plane dimensions");
  }

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width + x; }
  T& at(int x, int y) noexcept { return values[index(x, y)]; }
  const T& at(int x, int y) const noexcept { return values[index(x, y)]; }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }

  template <typename U>
  bool same_shape(const Plane<U>& other) const noexcept {
    return width == other.width && height == other.height;
  }

  bool operator==(const Plane&) const = default;
};

using FloatPlane = Plane<float>;
/// Binary plane, values in {0,1}.
using MaskPlane = Plane<std::uint8_t>;

enum class Band : int { blue = 0, green, red, nir, swir1, swir2 };
inline constexpr int kBandCount = 6;
inline constexpr std::array<std::string_view, kBandCount> kBandNames = {"blue", "green", "red", "nir", "swir1", "swir2"};

enum class MaskKind : int { water = 0, cloud, cloud_shadow, snow_ice, terrain_shadow };
inline constexpr int kMaskCount = 5;
inline constexpr std::array<MaskKind, kMaskCount> kAllMasks = {MaskKind::water, MaskKind::cloud, MaskKind::cloud_shadow,
                                                               MaskKind::snow_ice, MaskKind::terrain_shadow};
inline constexpr std::array<std::string_view, kMaskCount> kMaskNames = {"water", "cloud", "cloud_shadow", "snow_ice",
                                                                        "terrain_shadow"};

inline std::string_view mask_name(MaskKind m) { return kMaskNames[static_cast<int>(m)]; }
std::optional<MaskKind> parse_mask_name(std::string_view name);

/// One scene's six reflectance bands plus the validity plane on a square grid.
struct TileStack {
  int width = 0;
  int height = 0;
  double pixel_size = 30.0;
  std::array<FloatPlane, kBandCount> bands;
  MaskPlane valid;

  TileStack() = default;
  TileStack(int w, int h, double pixel_size_m = 30.0);

  FloatPlane& band(Band b) { return bands[static_cast<int>(b)]; }
  const FloatPlane& band(Band b) const { return bands[static_cast<int>(b)]; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }

  /// Throws DataError if plane shapes disagree or a valid pixel holds a non-finite value.
  void check() const;

  bool operator==(const TileStack&) const = default;
};

struct MaskSet {
  std::array<MaskPlane, kMaskCount> planes;

  MaskSet() = default;
  MaskSet(int w, int h);

  MaskPlane& operator[](MaskKind m) { return planes[static_cast<int>(m)]; }
  const MaskPlane& operator[](MaskKind m) const { return planes[static_cast<int>(m)]; }
  int width() const noexcept { return planes[0].width; }
  int height() const noexcept { return planes[0].height; }

  void check() const;

  bool operator==(const MaskSet&) const = default;
};

struct Dem {
  double pixel_size = 30.0;
  FloatPlane elevation;

  int width() const noexcept { return elevation.width; }
  int height() const noexcept { return elevation.height; }

  void check() const;

  bool operator==(const Dem&) const = default;
};

/// Fraction of `valid` pixels set in `mask`. Throws DataError if no pixel is valid.
double mask_fraction(const MaskPlane& mask, const MaskPlane& valid);

}  // namespace mtmask
