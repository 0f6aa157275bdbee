#include "mtmask/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <sys/utsname.h>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mtmask/alloc_stats.hpp"
#include "mtmask/baselines.hpp"
#include "mtmask/fusion.hpp"

namespace mtmask::bench {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Disjoint per-stage accumulators for one pass over the scenes.
struct Accounts {
  std::array<double, kStageKeys.size()> stage{};
  std::vector<std::pair<std::string, double>> sub;
  std::size_t forward_passes = 0, mask_computations = 0, extracted = 0, skipped = 0;

  void add_sub(std::string_view key, double s) {
    for (auto& [k, v] : sub)
      if (k == key) {
        v += s;
        return;
      }
    sub.emplace_back(std::string(key), s);
  }
  void merge(const Accounts& o) {
    for (std::size_t i = 0; i < stage.size(); ++i) stage[i] += o.stage[i];
    for (const auto& [k, v] : o.sub) add_sub(k, v);
    forward_passes += o.forward_passes;
    mask_computations += o.mask_computations;
    extracted += o.extracted;
    skipped += o.skipped;
  }
};

enum StageIndex { kSun, kMasks, kTerrain, kCombine, kFeatures };

void extract_all(const BenchScene& s, const MaskPlane& good, Accounts& acc) {
  const auto t0 = Clock::now();
  for (const auto& [x, y] : s.locations) {
    try {
      (void)extract_features(s.tile, good, x, y);
      ++acc.extracted;
    } catch (const DataError&) {
      ++acc.skipped;
    }
  }
  acc.stage[kFeatures] += seconds_since(t0);
}

void run_standard(const BenchScene& s, const StandardRules& rules, Accounts& acc) {
  auto t0 = Clock::now();
  const SolarPosition sun = solar_position(s.meta);
  acc.stage[kSun] += seconds_since(t0);

  MaskSet masks(s.tile.width, s.tile.height);
  t0 = Clock::now();
  masks[MaskKind::water] = standard_water(s.tile, rules);
  acc.add_sub("mask_acquisition.water", seconds_since(t0));
  auto t1 = Clock::now();
  masks[MaskKind::cloud] = standard_cloud(s.tile, rules);
  acc.add_sub("mask_acquisition.cloud", seconds_since(t1));
  t1 = Clock::now();
  masks[MaskKind::cloud_shadow] = standard_cloud_shadow(s.tile, masks[MaskKind::water], rules);
  acc.add_sub("mask_acquisition.cloud_shadow", seconds_since(t1));
  t1 = Clock::now();
  masks[MaskKind::snow_ice] = standard_snow(s.tile, rules);
  acc.add_sub("mask_acquisition.snow_ice", seconds_since(t1));
  acc.stage[kMasks] += seconds_since(t0);
  acc.mask_computations += 4;

  t0 = Clock::now();
  masks[MaskKind::terrain_shadow] = terrain_shadow(s.dem, sun);
  acc.stage[kTerrain] += seconds_since(t0);
  ++acc.mask_computations;

  t0 = Clock::now();
  for (auto& plane : masks.planes) plane = align_through_offset_grid(plane, rules.alignment_offset);
  const double align = seconds_since(t0);
  acc.add_sub("mask_combination.alignment", align);
  t1 = Clock::now();
  const MaskPlane good = fuse_good_water(masks, s.tile.valid);
  acc.add_sub("mask_combination.fusion", seconds_since(t1));
  acc.stage[kCombine] += seconds_since(t0);

  extract_all(s, good, acc);
}

void run_multitask(const BenchScene& s, const net::MultiTaskModel& model, Accounts& acc) {
  auto t0 = Clock::now();
  const net::Prediction pred = net::multitask_forward(model, s.tile);
  const MaskSet masks = net::binarize(pred, s.tile.width, s.tile.height);
  acc.stage[kMasks] += seconds_since(t0);
  ++acc.forward_passes;

  t0 = Clock::now();
  const MaskPlane good = fuse_good_water(masks, s.tile.valid);
  acc.stage[kCombine] += seconds_since(t0);

  extract_all(s, good, acc);
}

void run_scene(Variant v, const BenchScene& s, const net::MultiTaskModel* model, const BenchOptions& o, Accounts& acc) {
  if (v == Variant::standard)
    run_standard(s, o.rules, acc);
  else
    run_multitask(s, *model, acc);
}

void validate_inputs(Variant v, const std::vector<BenchScene>& scenes, const net::MultiTaskModel* model) {
  if (scenes.empty()) throw DataError("bench: no scenes");
  if (v == Variant::multitask && !model) throw DataError("bench: the multitask variant needs a model checkpoint");
  for (const auto& s : scenes) {
    s.tile.check();
    if (v == Variant::standard) {
      s.dem.check();
      if (s.dem.width() != s.tile.width || s.dem.height() != s.tile.height)
        throw DataError("bench: scene '" + s.id + "' has no DEM on the tile grid");
    }
  }
}

}  // namespace

std::string_view variant_name(Variant v) { return v == Variant::standard ? "standard" : "multitask"; }

Variant parse_variant(std::string_view name) {
  if (name == "standard") return Variant::standard;
  if (name == "multitask") return Variant::multitask;
  throw UsageError("unknown bench variant '" + std::string(name) + "'");
}

double BenchReport::stage(std::string_view key) const {
  for (const auto& [k, v] : stages)
    if (k == key) return v;
  throw DataError("bench report has no stage '" + std::string(key) + "'");
}

nlohmann::ordered_json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["scene_count"] = scene_count;
  nlohmann::ordered_json st;
  for (const auto& [k, v] : stages) st[k] = v;
  j["stages"] = st;
  nlohmann::ordered_json sub = nlohmann::ordered_json::object();
  for (const auto& [k, v] : substages) sub[k] = v;
  j["substages"] = sub;
  j["total"] = total;
  j["peak_bytes"] = peak_bytes;
  j["peak_source"] = peak_source;
  j["forward_passes"] = forward_passes;
  j["mask_computations"] = mask_computations;
  j["features_extracted"] = features_extracted;
  j["features_skipped"] = features_skipped;
  j["threads"] = threads;
  j["comparable"] = comparable;
  j["repeats"] = repeats;
  j["machine"] = machine;
  if (variant == "standard")
    j["note"] = "mask_combination includes the simulated cross-source alignment; its cost share is a modelling choice";
  return j;
}

MaskPlane standard_water(const TileStack& tile, const StandardRules& rules) {
  return apply_threshold(mndwi(tile), Threshold{rules.water_mndwi});
}

namespace {
double band_mean(const TileStack& tile, std::size_t i) {
  double s = 0;
  for (int b = 0; b < kBandCount; ++b) s += tile.bands[b].values[i];
  return s / kBandCount;
}
}  // namespace

MaskPlane standard_cloud(const TileStack& tile, const StandardRules& rules) {
  MaskPlane m(tile.width, tile.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = tile.valid.values[i] && band_mean(tile, i) > rules.cloud_brightness;
  return m;
}

MaskPlane standard_cloud_shadow(const TileStack& tile, const MaskPlane& water, const StandardRules& rules) {
  MaskPlane m(tile.width, tile.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.values[i] = tile.valid.values[i] && !water.values[i] && band_mean(tile, i) < rules.shadow_darkness;
  return m;
}

MaskPlane standard_snow(const TileStack& tile, const StandardRules& rules) {
  MaskPlane m(tile.width, tile.height, 0);
  const auto& g = tile.band(Band::green).values;
  const auto& s = tile.band(Band::swir1).values;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double den = static_cast<double>(g[i]) + s[i];
    m.values[i] = tile.valid.values[i] && den > 0 && (g[i] - s[i]) / den > rules.snow_contrast && g[i] > rules.snow_green;
  }
  return m;
}

MaskPlane align_through_offset_grid(const MaskPlane& mask, double offset) {
  const int W = mask.width, H = mask.height;
  // Coordinates of the foreign grid, as a reprojection would hold them.
  FloatPlane gx(W, H), gy(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      gx.at(x, y) = static_cast<float>(x + offset);
      gy.at(x, y) = static_cast<float>(y + offset);
    }
  auto resample = [&](const FloatPlane& src, double sign) {
    FloatPlane out(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double fx = std::clamp(x + sign * (gx.at(x, y) - x), 0.0, W - 1.0);
        const double fy = std::clamp(y + sign * (gy.at(x, y) - y), 0.0, H - 1.0);
        const int x0 = std::min(static_cast<int>(fx), W - 2 < 0 ? 0 : W - 2);
        const int y0 = std::min(static_cast<int>(fy), H - 2 < 0 ? 0 : H - 2);
        const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const double tx = fx - x0, ty = fy - y0;
        const double top = src.at(x0, y0) * (1 - tx) + src.at(x1, y0) * tx;
        const double bot = src.at(x0, y1) * (1 - tx) + src.at(x1, y1) * tx;
        out.at(x, y) = static_cast<float>(top * (1 - ty) + bot * ty);
      }
    return out;
  };
  FloatPlane f(W, H);
  for (std::size_t i = 0; i < f.size(); ++i) f.values[i] = mask.values[i];
  const FloatPlane back = resample(resample(f, 1.0), -1.0);
  MaskPlane out(W, H, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = back.values[i] >= 0.5f;
  return out;
}

BenchReport run_pipeline(Variant variant, const std::vector<BenchScene>& scenes, const net::MultiTaskModel* model,
                         const BenchOptions& options) {
  validate_inputs(variant, scenes, model);
  if (options.threads < 1) throw UsageError("bench: thread count must be positive");

#if defined(__GLIBC__)
  // Keep freed large blocks mapped so that both variants reuse warm pages
  // instead of paying fresh page faults for every scene.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  if (options.warmup) {
    Accounts discard;
    run_scene(variant, scenes.front(), model, options, discard);
  }

  if (options.repeats < 1) throw UsageError("bench: repeat count must be positive");

  auto one_pass = [&] {
    Accounts acc;
    if (options.threads == 1) {
      for (const auto& s : scenes) run_scene(variant, s, model, options, acc);
      return acc;
    }
    std::vector<Accounts> parts(static_cast<std::size_t>(options.threads));
    {
      std::vector<std::jthread> pool;
      for (int t = 0; t < options.threads; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t i = static_cast<std::size_t>(t); i < scenes.size(); i += static_cast<std::size_t>(options.threads))
            run_scene(variant, scenes[i], model, options, parts[static_cast<std::size_t>(t)]);
        });
    }
    for (const auto& p : parts) acc.merge(p);
    return acc;
  };
  auto total_of = [](const Accounts& a) { return std::accumulate(a.stage.begin(), a.stage.end(), 0.0); };

  alloc_stats::reset_peak();
  const std::size_t rss_before = alloc_stats::peak_rss_bytes();
  Accounts acc = one_pass();
  for (int rep = 1; rep < options.repeats; ++rep) {
    Accounts next = one_pass();
    if (total_of(next) < total_of(acc)) acc = std::move(next);
  }

  BenchReport r;
  r.variant = std::string(variant_name(variant));
  for (std::size_t i = 0; i < kStageKeys.size(); ++i) {
    r.stages.emplace_back(std::string(kStageKeys[i]), acc.stage[i]);
    r.total += acc.stage[i];
  }
  r.substages = acc.sub;
  r.peak_bytes = alloc_stats::peak_bytes();
  r.peak_source = "allocator";
  if (r.peak_bytes == 0) {
    r.peak_bytes = std::max(rss_before, alloc_stats::peak_rss_bytes());
    r.peak_source = "rss";
  }
  r.scene_count = scenes.size();
  r.forward_passes = acc.forward_passes;
  r.mask_computations = acc.mask_computations;
  r.features_extracted = acc.extracted;
  r.features_skipped = acc.skipped;
  r.threads = options.threads;
  r.comparable = options.threads == 1;
  r.repeats = options.repeats;
  r.machine = machine_descriptor();
  return r;
}

Speedup speedup(double standard_total, double multitask_total) {
  if (!(standard_total > 0) || !(multitask_total > 0)) throw DataError("speedup: totals must be positive");
  return {standard_total / multitask_total, (1.0 - multitask_total / standard_total) * 100.0};
}

Speedup speedup(const BenchReport& standard, const BenchReport& multitask) {
  if (standard.scene_count != multitask.scene_count) throw DataError("speedup: reports cover different scene sets");
  return speedup(standard.total, multitask.total);
}

std::string reports_csv(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out.precision(9);
  out << "variant,stage,seconds\n";
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.stages) out << r.variant << ',' << k << ',' << v << '\n';
    for (const auto& [k, v] : r.substages) out << r.variant << ',' << k << ',' << v << '\n';
    out << r.variant << ",total," << r.total << '\n';
    out << r.variant << ",peak_bytes," << r.peak_bytes << '\n';
  }
  return out.str();
}

std::string machine_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  utsname u{};
  std::string os = uname(&u) == 0 ? std::string(u.sysname) + " " + u.release + " " + u.machine : "unknown os";
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads; " + os;
}

}  // namespace mtmask::bench
