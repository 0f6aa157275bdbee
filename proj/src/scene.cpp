#include "mtmask/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mtmask/fusion.hpp"
#include "mtmask/rng.hpp"

namespace mtmask {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Stream tags for Rng::derive.
namespace stream {
enum : std::uint64_t { meta = 1, cloud, snow, water, turbidity, land_mix, brightness, dem, pixel_noise, ssc_pick, ssc_noise, levels };
}

/// Smoothstep-interpolated lattice noise in [0,1], averaged over octaves.
class ValueNoise {
public:
  ValueNoise(Rng rng, int width, int height, double scale, int octaves) {
    double s = scale;
    for (int o = 0; o < octaves; ++o) {
      Octave oct;
      oct.scale = std::max(1.0, s);
      oct.gw = static_cast<int>(std::ceil(width / oct.scale)) + 2;
      oct.gh = static_cast<int>(std::ceil(height / oct.scale)) + 2;
      Rng r = rng.derive(static_cast<std::uint64_t>(o));
      oct.lattice.resize(static_cast<std::size_t>(oct.gw) * oct.gh);
      for (auto& v : oct.lattice) v = r.uniform();
      oct.weight = std::pow(0.5, o);
      octaves_.push_back(std::move(oct));
      s *= 0.5;
    }
  }

  double at(double x, double y) const {
    double sum = 0, wsum = 0;
    for (const auto& o : octaves_) {
      const double gx = std::clamp(x / o.scale, 0.0, o.gw - 1.000001);
      const double gy = std::clamp(y / o.scale, 0.0, o.gh - 1.000001);
      const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
      const double tx = smooth(gx - x0), ty = smooth(gy - y0);
      auto L = [&](int i, int j) { return o.lattice[static_cast<std::size_t>(j) * o.gw + i]; };
      const double top = L(x0, y0) * (1 - tx) + L(x0 + 1, y0) * tx;
      const double bot = L(x0, y0 + 1) * (1 - tx) + L(x0 + 1, y0 + 1) * tx;
      sum += o.weight * (top * (1 - ty) + bot * ty);
      wsum += o.weight;
    }
    return sum / wsum;
  }

private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  struct Octave {
    double scale = 1;
    int gw = 0, gh = 0;
    double weight = 1;
    std::vector<double> lattice;
  };
  std::vector<Octave> octaves_;
};

std::vector<double> sample_field(const ValueNoise& n, int w, int h, double dx = 0, double dy = 0) {
  std::vector<double> f(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(y) * w + x] = n.at(x + dx, y + dy);
  return f;
}

// Marks the `count` eligible pixels with the highest field value (ties by index).
void take_top(const std::vector<double>& field, std::vector<int>& label, int cls, const MaskPlane& valid, std::size_t count) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (valid.values[i] && label[i] < 0) eligible.push_back(i);
  count = std::min(count, eligible.size());
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count), eligible.end(),
                    [&](std::size_t a, std::size_t b) { return field[a] != field[b] ? field[a] > field[b] : a < b; });
  for (std::size_t k = 0; k < count; ++k) label[eligible[k]] = cls;
}

ObservationMeta derive_meta(std::uint64_t seed) {
  Rng rng = Rng(seed).derive(stream::meta);
  ObservationMeta m;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int doy = 1 + static_cast<int>(rng.below(365));
    m.latitude = rng.uniform(-50.0, 50.0);
    m.longitude = rng.uniform(-180.0, 180.0);
    const bool morning = rng.uniform() < 0.5;
    const double solar_hour = morning ? rng.uniform(7.0, 9.5) : rng.uniform(14.5, 17.0);
    double utc = solar_hour - m.longitude / 15.0;
    int day_shift = 0;
    while (utc < 0) utc += 24, --day_shift;
    while (utc >= 24) utc -= 24, ++day_shift;
    const int day = std::clamp(doy + day_shift, 1, 365);
    // Day of year 2021 (not a leap year) to calendar date.
    static constexpr int kMonthDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int month = 0, rem = day;
    while (rem > kMonthDays[month]) rem -= kMonthDays[month++];
    m.time.year = 2021;
    m.time.month = month + 1;
    m.time.day = rem;
    m.time.hour = static_cast<int>(utc);
    m.time.minute = static_cast<int>((utc - m.time.hour) * 60.0);
    m.time.second = 0.0;
    const double el = solar_position(m).elevation;
    if (el >= 15.0 && el <= 40.0) return m;
  }
  return m;
}

struct Spectrum {
  std::array<double, kBandCount> v;
};

// Reference class priors (blue, green, red, nir, swir1, swir2).
constexpr Spectrum kVegetation{{0.04, 0.07, 0.05, 0.32, 0.18, 0.09}};
constexpr Spectrum kSoil{{0.10, 0.14, 0.18, 0.26, 0.32, 0.25}};
constexpr Spectrum kCloud{{0.46, 0.46, 0.47, 0.52, 0.40, 0.30}};
constexpr Spectrum kSnow{{0.80, 0.78, 0.74, 0.62, 0.07, 0.05}};
constexpr Spectrum kClearWater{{0.05, 0.05, 0.02, 0.01, 0.012, 0.008}};
constexpr Spectrum kTurbidWater{{0.07, 0.13, 0.16, 0.10, 0.022, 0.013}};
constexpr double kCloudShadowFactor = 0.3;
// Cast shadow keeps only diffuse skylight, which is much bluer than direct sun.
constexpr Spectrum kTerrainShadowFactor{{0.30, 0.22, 0.17, 0.10, 0.06, 0.05}};

}  // namespace

double ssc_truth(double mean_red, double mean_nir, double z) {
  return std::exp(1.0 + 30.0 * (mean_red - 0.03) + 20.0 * (mean_nir - 0.01)) * std::exp(0.1 * z);
}

void SceneConfig::check() const {
  if (width < 8 || height < 8) throw DataError("scene: width and height must be at least 8");
  if (!(pixel_size > 0)) throw DataError("scene: pixel size must be positive");
  const double f[] = {water_fraction, cloud_fraction, cloud_shadow_fraction, snow_ice_fraction};
  double sum = 0;
  for (double v : f) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("scene: infeasible class fraction (each must lie in [0,1])");
    sum += v;
  }
  if (sum > 1.0 + 1e-12) throw DataError("scene: infeasible class fractions (sum exceeds 1)");
  if (!(border_invalid >= 0.0 && border_invalid < 1.0)) throw DataError("scene: border_invalid must lie in [0,1)");
  if (!(noise >= 0.0)) throw DataError("scene: noise must be non-negative");
  if (!(blob_scale >= 1.0) || !(terrain_scale >= 1.0)) throw DataError("scene: noise scales must be >= 1 pixel");
  if (!(relief >= 0.0)) throw DataError("scene: relief must be non-negative");
  if (ssc_points < 0) throw DataError("scene: ssc_points must be non-negative");
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.check();
  const int W = cfg.width, H = cfg.height;
  const std::size_t N = static_cast<std::size_t>(W) * H;
  const Rng root(cfg.seed);

  Scene s;
  s.meta = cfg.meta ? *cfg.meta : derive_meta(cfg.seed);
  s.sun = solar_position(s.meta);

  // No-data swath on the left edge.
  s.tile = TileStack(W, H, cfg.pixel_size);
  const int invalid_cols = static_cast<int>(std::floor(cfg.border_invalid * W));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < invalid_cols; ++x) s.tile.valid.at(x, y) = 0;
  std::size_t n_valid = 0;
  for (auto v : s.tile.valid.values) n_valid += v;

  // DEM and its cast shadow.
  s.dem.pixel_size = cfg.pixel_size;
  s.dem.elevation = FloatPlane(W, H);
  {
    const ValueNoise terrain(root.derive(stream::dem), W, H, cfg.terrain_scale, 3);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        s.dem.elevation.at(x, y) = static_cast<float>(200.0 + cfg.relief * terrain.at(x, y));
  }
  s.masks = MaskSet(W, H);
  s.masks[MaskKind::terrain_shadow] = terrain_shadow(s.dem, s.sun);

  // Class labels by priority: cloud > snow/ice > cloud shadow > water.
  enum { kLand = -1, kCloudCls = 0, kSnowCls, kShadowCls, kWaterCls };
  std::vector<int> label(N, kLand);
  auto target = [&](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(n_valid))); };

  const ValueNoise cloud_noise(root.derive(stream::cloud), W + 64, H + 64, cfg.blob_scale, 2);
  const auto cloud_field = sample_field(cloud_noise, W, H, 32, 32);
  take_top(cloud_field, label, kCloudCls, s.tile.valid, target(cfg.cloud_fraction));

  take_top(sample_field(ValueNoise(root.derive(stream::snow), W, H, cfg.blob_scale, 2), W, H), label, kSnowCls, s.tile.valid,
           target(cfg.snow_ice_fraction));

  // Shadows fall on the side of each cloud facing away from the sun.
  const double off = cfg.blob_scale * 0.75;
  const double ox = -std::sin(s.sun.azimuth * kDeg) * off;
  const double oy = std::cos(s.sun.azimuth * kDeg) * off;
  take_top(sample_field(cloud_noise, W, H, 32 - ox, 32 - oy), label, kShadowCls, s.tile.valid,
           target(cfg.cloud_shadow_fraction));

  take_top(sample_field(ValueNoise(root.derive(stream::water), W, H, cfg.blob_scale, 2), W, H), label, kWaterCls, s.tile.valid,
           target(cfg.water_fraction));

  for (std::size_t i = 0; i < N; ++i) {
    if (!s.tile.valid.values[i]) {
      s.masks[MaskKind::terrain_shadow].values[i] = 0;
      continue;
    }
    s.masks[MaskKind::cloud].values[i] = label[i] == kCloudCls;
    s.masks[MaskKind::snow_ice].values[i] = label[i] == kSnowCls;
    s.masks[MaskKind::cloud_shadow].values[i] = label[i] == kShadowCls;
    s.masks[MaskKind::water].values[i] = label[i] == kWaterCls;
  }

  // Reflectance.
  Rng level_rng = root.derive(stream::levels);
  // Squared uniform: most scenes hold clear to moderately turbid water.
  const double u = level_rng.uniform();
  const double turbidity_level = std::clamp(0.8 * u * u + cfg.spectral_shift, 0.0, 1.0);
  const ValueNoise turbidity(root.derive(stream::turbidity), W, H, cfg.blob_scale, 2);
  const ValueNoise land_mix(root.derive(stream::land_mix), W, H, cfg.blob_scale * 1.5, 2);
  const ValueNoise brightness(root.derive(stream::brightness), W, H, cfg.blob_scale, 2);
  Rng pixel_rng = root.derive(stream::pixel_noise);
  const double shift = cfg.spectral_shift;

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (!s.tile.valid.values[i]) continue;
      std::array<double, kBandCount> r{};
      const double bright = 0.85 + 0.3 * brightness.at(x, y);
      switch (label[i]) {
        case kCloudCls:
          for (int b = 0; b < kBandCount; ++b) r[b] = kCloud.v[b] * bright;
          break;
        case kSnowCls:
          for (int b = 0; b < kBandCount; ++b) r[b] = kSnow.v[b] * (0.95 + 0.1 * brightness.at(x, y));
          break;
        case kWaterCls: {
          const double t = std::clamp(turbidity_level + 0.6 * (turbidity.at(x, y) - 0.5), 0.0, 1.0);
          for (int b = 0; b < kBandCount; ++b) r[b] = kClearWater.v[b] + (kTurbidWater.v[b] - kClearWater.v[b]) * t;
          break;
        }
        default: {
          const double m = land_mix.at(x, y);
          for (int b = 0; b < kBandCount; ++b) r[b] = (kVegetation.v[b] * (1 - m) + kSoil.v[b] * m) * bright;
          if (label[i] == kShadowCls)
            for (auto& v : r) v *= kCloudShadowFactor;
        }
      }
      if (s.masks[MaskKind::terrain_shadow].values[i])
        for (int b = 0; b < kBandCount; ++b) r[b] *= kTerrainShadowFactor.v[b];
      for (int b = 0; b < kBandCount; ++b) {
        // A shifted distribution tilts the spectrum: short wavelengths up, long down.
        const double tilt = 1.0 + shift * (1.0 - 2.0 * b / (kBandCount - 1));
        const double v = r[b] * tilt + cfg.noise * pixel_rng.normal();
        s.tile.bands[b].values[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  // SSC samples at good-water pixels with a populated window.
  const MaskPlane good = fuse_good_water(s.masks, s.tile.valid);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < N; ++i)
    if (good.values[i]) candidates.push_back(i);
  Rng pick = root.derive(stream::ssc_pick);
  for (std::size_t k = candidates.size(); k > 1; --k) std::swap(candidates[k - 1], candidates[pick.below(k)]);
  Rng ssc_noise = root.derive(stream::ssc_noise);
  constexpr int kMinGood = 5;
  for (std::size_t i : candidates) {
    if (static_cast<int>(s.ssc.size()) >= cfg.ssc_points) break;
    const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
    const FeatureVector f = extract_features(s.tile, good, x, y);
    if (f.good_count < kMinGood) continue;
    const double ssc = ssc_truth(f.bands[static_cast<int>(Band::red)].mean, f.bands[static_cast<int>(Band::nir)].mean,
                                 ssc_noise.normal());
    s.ssc.push_back({x, y, ssc});
  }
  return s;
}

}  // namespace mtmask
