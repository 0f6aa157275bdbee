#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mtmask/fusion.hpp"
#include "mtmask/net/mlp.hpp"

namespace mtmask {

struct SscRecord {
  int x = 0;
  int y = 0;
  double ssc = 0.0;  // mg/L
  std::string scene_id;
  FeatureVector features;
};

/// `x,y,ssc_mg_per_l,scene_id` with a header row. Features are not stored.
void write_ssc_csv(std::span<const SscRecord> records, const std::filesystem::path& path);
std::vector<SscRecord> read_ssc_csv(const std::filesystem::path& path);

/// Per-feature standardisation fitted on the training split.
struct FeatureScaler {
  std::array<double, kFeatureWidth> mean{};
  std::array<double, kFeatureWidth> scale{};  // std, or 1 for constant features

  static FeatureScaler fit(std::span<const SscRecord> records);
  std::array<float, kFeatureWidth> apply(const FeatureVector& f) const;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// The blending rule: o1 below t1 -> o1; else o2 above t2 -> o2; else the
/// mean of both. Negative results are floored at 0 mg/L.
double ssc_blend(double o1, double o2, double t1, double t2);

struct SscEnsemble {
  net::Mlp model_low;   // trained on records up to the low range bound
  net::Mlp model_high;  // trained on records from the high range bound
  double t1 = kInf;
  double t2 = kInf;
  FeatureScaler scaler;

  /// Raw outputs (o1, o2) in mg/L, i.e. expm1 of each network's output.
  std::pair<double, double> outputs(const FeatureVector& f) const;
};

double ssc_predict(const SscEnsemble& ens, const FeatureVector& f);

struct SscFitConfig {
  double low_max = 20.0;   // model_low sees ssc <= low_max
  double high_min = 14.0;  // model_high sees ssc >= high_min
  std::vector<int> hidden{32, 16};
  int epochs = 600;
  int batch_size = 16;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  int grid = 50;  // uniform threshold points per axis
};

/// Candidate thresholds for one axis: -inf, `n` evenly spaced points over
/// [lo, hi], +inf.
std::vector<double> threshold_axis(double lo, double hi, int n);

/// RMSE in mg/L of the blended predictions.
double blend_rmse(std::span<const double> o1, std::span<const double> o2, std::span<const double> y, double t1, double t2);

/// Trains both range models on log1p(ssc) with squared error, then picks
/// (t1, t2), t1 <= t2, from threshold_axis over the validation SSC range by
/// minimum validation RMSE. Ties go to the lexicographically smallest pair.
/// Throws DataError when a split or a range subset is empty.
SscEnsemble fit_ensemble(std::span<const SscRecord> train, std::span<const SscRecord> val, const SscFitConfig& config = {});

/// Trains one regressor on log1p targets; exposed for the single-model comparison.
net::Mlp train_regressor(std::span<const SscRecord> records, const FeatureScaler& scaler, const SscFitConfig& config,
                         std::uint64_t stream);

void save_ensemble(const SscEnsemble& ens, const std::filesystem::path& path);
SscEnsemble load_ensemble(const std::filesystem::path& path);

}  // namespace mtmask
