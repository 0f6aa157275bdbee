#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmask/raster.hpp"

namespace mtmask {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend Confusion operator+(Confusion a, const Confusion& b) noexcept { return a += b; }
  bool operator==(const Confusion&) const = default;
};

/// nullopt marks a 0/0 ratio; it is never folded into 0.
using Ratio = std::optional<double>;

struct PixelMetrics {
  Ratio precision, recall, f1, iou;
};

struct RegressionMetrics {
  double rmse = 0, mae = 0, bias = 0;
  double abs_median = 0, abs_max = 0, abs_min = 0, abs_std = 0;
  double abs_p75 = 0, abs_p90 = 0, abs_p95 = 0;
  std::size_t count = 0;
};

/// Counts over pixels where `valid` is set. Throws DataError on shape mismatch.
Confusion confusion(const MaskPlane& pred, const MaskPlane& label, const MaskPlane& valid);

PixelMetrics pixel_metrics(const Confusion& c);

/// Linear-interpolation percentile (p in [0,100]) of already sorted data.
double percentile_sorted(std::span<const double> sorted, double p);

/// bias = mean(y - y_hat). Throws DataError on empty or mismatched input.
RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> y_hat);

/// Mean of the defined entries; `skipped` counts the undefined ones.
struct RatioSummary {
  Ratio mean;
  std::size_t skipped = 0;
};
RatioSummary summarize(std::span<const Ratio> values);

nlohmann::json to_json(const Confusion& c);
nlohmann::json to_json(const PixelMetrics& m);
nlohmann::json to_json(const RegressionMetrics& m);

/// Per-scene, per-mask confusions plus the pooled result.
struct MaskEvaluation {
  std::vector<std::string> scene_ids;
  std::vector<std::string> mask_names;
  std::vector<std::vector<Confusion>> per_scene;  // [scene][mask]

  std::vector<Confusion> pooled() const;
  nlohmann::json report() const;
  /// Columns: scene,mask,tp,fp,fn,tn,precision,recall,f1,iou. One row per
  /// scene and mask, then rows with scene "pooled". Undefined ratios are empty cells.
  std::string csv() const;
};

}  // namespace mtmask
