#include "mtmask/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace mtmask {

MaskPlane fuse_good_water(const MaskSet& masks, const MaskPlane& valid) {
  masks.check();
  if (!masks.planes[0].same_shape(valid)) throw DataError("fuse: mask and valid dimensions differ");
  MaskPlane good(valid.width, valid.height, 0);
  const auto& water = masks[MaskKind::water].values;
  const auto& cloud = masks[MaskKind::cloud].values;
  const auto& cshadow = masks[MaskKind::cloud_shadow].values;
  const auto& snow = masks[MaskKind::snow_ice].values;
  const auto& tshadow = masks[MaskKind::terrain_shadow].values;
  for (std::size_t i = 0; i < good.size(); ++i)
    good.values[i] = (valid.values[i] && water[i] && !cloud[i] && !cshadow[i] && !snow[i] && !tshadow[i]) ? 1 : 0;
  return good;
}

bool cloud_cover_filter(const MaskSet& masks, const MaskPlane& valid) {
  return mask_fraction(masks[MaskKind::cloud], valid) <= kMaxTrainingCloudCover;
}

std::array<float, kFeatureWidth> FeatureVector::values() const {
  std::array<float, kFeatureWidth> v{};
  for (int b = 0; b < kBandCount; ++b) {
    const auto& s = bands[b];
    v[5 * b + 0] = static_cast<float>(s.mean);
    v[5 * b + 1] = static_cast<float>(s.median);
    v[5 * b + 2] = static_cast<float>(s.std);
    v[5 * b + 3] = static_cast<float>(s.min);
    v[5 * b + 4] = static_cast<float>(s.max);
  }
  return v;
}

FeatureVector extract_features(const TileStack& tile, const MaskPlane& good, int x, int y, double radius_m) {
  if (!good.same_shape(tile.valid)) throw DataError("features: good mask does not match tile");
  if (!tile.valid.contains(x, y)) throw DataError("features: location outside the tile");
  const double r_px = radius_m / tile.pixel_size;
  const double r2 = r_px * r_px;
  const int reach = static_cast<int>(std::floor(r_px));

  std::vector<std::size_t> idx;
  for (int dy = -reach; dy <= reach; ++dy)
    for (int dx = -reach; dx <= reach; ++dx) {
      if (static_cast<double>(dx * dx + dy * dy) > r2) continue;
      const int px = x + dx, py = y + dy;
      if (!good.contains(px, py) || !good.at(px, py)) continue;
      idx.push_back(good.index(px, py));
    }
  if (idx.empty()) throw DataError("features: no good-quality water pixels within the window");

  FeatureVector f;
  f.good_count = static_cast<int>(idx.size());
  std::vector<double> vals(idx.size());
  for (int b = 0; b < kBandCount; ++b) {
    for (std::size_t k = 0; k < idx.size(); ++k) vals[k] = tile.bands[b].values[idx[k]];
    double sum = 0;
    for (double v : vals) sum += v;
    BandStats s;
    s.mean = sum / vals.size();
    double var = 0;
    for (double v : vals) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / vals.size());
    std::sort(vals.begin(), vals.end());
    s.min = vals.front();
    s.max = vals.back();
    const std::size_t n = vals.size();
    s.median = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    f.bands[b] = s;
  }
  return f;
}

}  // namespace mtmask
