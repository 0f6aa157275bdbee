#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtmask/net/model.hpp"
#include "mtmask/raster.hpp"
#include "mtmask/solar.hpp"

namespace mtmask::bench {

/// Everything either pipeline may consume for one scene.
struct BenchScene {
  std::string id;
  TileStack tile;
  Dem dem;
  ObservationMeta meta;
  std::vector<std::pair<int, int>> locations;  // feature-extraction sites
};

enum class Variant { standard, multitask };
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// Stage keys in report order. Each variant reports all five; stages a
/// variant does not run are reported as 0.
inline constexpr std::array<std::string_view, 5> kStageKeys = {"sun_position", "mask_acquisition", "terrain_shadow",
                                                                "mask_combination", "feature_extraction"};

struct BenchReport {
  std::string variant;
  std::vector<std::pair<std::string, double>> stages;     // seconds, kStageKeys order
  std::vector<std::pair<std::string, double>> substages;  // finer split inside stages, seconds
  double total = 0.0;
  std::size_t peak_bytes = 0;  // heap high-water mark during the measured pass
  std::string peak_source;     // "allocator" or "rss"
  std::size_t scene_count = 0;
  std::size_t forward_passes = 0;
  std::size_t mask_computations = 0;
  std::size_t features_extracted = 0;
  std::size_t features_skipped = 0;  // sites without good pixels in the window
  int threads = 1;
  bool comparable = true;
  int repeats = 1;
  std::string machine;

  double stage(std::string_view key) const;
  nlohmann::ordered_json to_json() const;
};

/// Fixed spectral rules standing in for an external per-source mask product.
struct StandardRules {
  double water_mndwi = 0.0;       // water: MNDWI > this
  double cloud_brightness = 0.4;  // cloud: mean of six bands > this
  double shadow_darkness = 0.08;  // cloud shadow: mean < this and not water
  double snow_contrast = 0.4;     // snow: (green - swir1)/(green + swir1) > this
  double snow_green = 0.3;        //        and green > this
  double alignment_offset = 1.0;  // pixels, of the simulated cross-source grid
};

struct BenchOptions {
  int threads = 1;  // > 1 marks the report non-comparable
  int repeats = 1;  // measured passes; the one with the smallest total is reported
  bool warmup = true;
  StandardRules rules;
};

/// Runs one pipeline over all scenes and times each stage with a steady clock.
/// A warm-up pass over the first scene is excluded. With several repeats
/// the fastest pass is reported and the peak covers all passes. The multitask variant
/// requires `model`; the standard variant requires DEMs matching the tiles.
/// Throws DataError for missing inputs.
BenchReport run_pipeline(Variant variant, const std::vector<BenchScene>& scenes, const net::MultiTaskModel* model,
                         const BenchOptions& options = {});

struct Speedup {
  double ratio = 1.0;
  double improvement_percent = 0.0;
};

/// ratio = standard / multitask, improvement = (1 - multitask / standard) * 100.
Speedup speedup(double standard_total, double multitask_total);
/// Throws DataError if the reports cover different scene counts.
Speedup speedup(const BenchReport& standard, const BenchReport& multitask);

/// One row per report and stage: variant,stage,seconds, followed by total and peak_bytes rows.
std::string reports_csv(const std::vector<BenchReport>& reports);

std::string machine_descriptor();

/// Water, cloud, cloud-shadow and snow masks of the standard variant; exposed for tests.
MaskPlane standard_water(const TileStack& tile, const StandardRules& rules);
MaskPlane standard_cloud(const TileStack& tile, const StandardRules& rules);
MaskPlane standard_cloud_shadow(const TileStack& tile, const MaskPlane& water, const StandardRules& rules);
MaskPlane standard_snow(const TileStack& tile, const StandardRules& rules);

/// Bilinear resample of a mask through a constant (offset, offset) grid and
/// back, re-binarised at 0.5. Stands in for aligning a product delivered on a
/// different grid.
MaskPlane align_through_offset_grid(const MaskPlane& mask, double offset);

}  // namespace mtmask::bench
