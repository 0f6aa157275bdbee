#pragma once

#include <array>
#include <vector>

#include "mtmask/raster.hpp"

namespace mtmask {

/// good = valid & water & !cloud & !cloud_shadow & !snow_ice & !terrain_shadow
MaskPlane fuse_good_water(const MaskSet& masks, const MaskPlane& valid);

inline constexpr double kMaxTrainingCloudCover = 0.30;

/// True when the cloud fraction over valid pixels is at most 30 %.
/// Throws DataError when no pixel is valid.
bool cloud_cover_filter(const MaskSet& masks, const MaskPlane& valid);

struct BandStats {
  double mean = 0, median = 0, std = 0, min = 0, max = 0;
};

inline constexpr int kFeatureWidth = kBandCount * 5;
inline constexpr double kFeatureRadiusMeters = 300.0;

/// Window statistics of good-quality water pixels around one location.
struct FeatureVector {
  std::array<BandStats, kBandCount> bands;
  int good_count = 0;

  /// mean, median, std, min, max for blue, then green, ... swir2.
  std::array<float, kFeatureWidth> values() const;
};

/// Statistics over good pixels whose centre lies within `radius_m` of the
/// centre of pixel (x, y). Median is the midpoint average for even counts and
/// std the population form. Throws DataError if (x, y) is outside the tile or
/// the window holds no good pixel.
FeatureVector extract_features(const TileStack& tile, const MaskPlane& good, int x, int y,
                               double radius_m = kFeatureRadiusMeters);

}  // namespace mtmask
