#pragma once

#include <span>

#include "mtmask/raster.hpp"

namespace mtmask {

/// Per-pixel index values in [-1, 1] where `valid` is set.
struct ScoreMap {
  FloatPlane values;
  MaskPlane valid;

  int width() const noexcept { return values.width; }
  int height() const noexcept { return values.height; }
};

struct Threshold {
  double t = 0.0;
};

/// (green - swir1) / (green + swir1). Pixels invalid in the tile or with a
/// zero denominator come out invalid.
ScoreMap mndwi(const TileStack& tile);

/// Binary mask of valid pixels with score strictly above t.
MaskPlane apply_threshold(const ScoreMap& score, Threshold t);

/// Otsu's method on a `bins`-bin histogram spanning [min, max] of the valid
/// values. Returns the interior bin edge that maximises between-class
/// variance; the lowest edge wins ties. Throws NumericError when fewer than
/// two distinct values are present and DataError when bins < 2.
Threshold otsu_threshold(const ScoreMap& score, int bins = 256);

/// Between-class variance for splitting `hist` before bin `k`, computed from
/// integer class counts and bin-index sums so that every caller evaluating the
/// same split gets the same double.
double between_class_variance(long long n0, long long sum0, long long n1, long long sum1);

/// Validation sweep: t = k/100 for k = -100..100, maximising pooled F1 of
/// (score > t) against labels over valid pixels. Lowest t wins ties.
/// Throws DataError for empty or mismatched lists and for labels with no
/// positive pixel.
Threshold select_threshold(std::span<const ScoreMap> scores, std::span<const MaskPlane> labels);

}  // namespace mtmask
