#include "mtmask/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace mtmask {

ScoreMap mndwi(const TileStack& tile) {
  tile.check();
  ScoreMap s{FloatPlane(tile.width, tile.height, 0.0f), MaskPlane(tile.width, tile.height, 0)};
  const auto& green = tile.band(Band::green).values;
  const auto& swir = tile.band(Band::swir1).values;
  for (std::size_t i = 0; i < tile.pixel_count(); ++i) {
    if (!tile.valid.values[i]) continue;
    const double g = green[i];
    const double w = swir[i];
    const double den = g + w;
    if (den == 0.0) continue;
    const double v = (g - w) / den;
    if (!std::isfinite(v)) continue;
    s.values.values[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    s.valid.values[i] = 1;
  }
  return s;
}

namespace {

using u128 = unsigned __int128;

// 128 x 128 -> 256-bit product as (high, low) halves.
std::pair<u128, u128> mul_wide(u128 a, u128 b) {
  constexpr u128 mask = ~std::uint64_t{0};
  const u128 a0 = a & mask, a1 = a >> 64, b0 = b & mask, b1 = b >> 64;
  const u128 p00 = a0 * b0, p01 = a0 * b1, p10 = a1 * b0, p11 = a1 * b1;
  const u128 mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
  const u128 lo = (p00 & mask) | (mid << 64);
  const u128 hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
  return {hi, lo};
}

// Between-class variance of one split as the exact fraction num / den.
struct Split {
  u128 num = 0;  // (n1 sum0 - n0 sum1)^2
  u128 den = 1;  // n0 n1
};

Split split_of(long long n0, long long sum0, long long n1, long long sum1) {
  if (n0 == 0 || n1 == 0) return {};
  const __int128 diff = static_cast<__int128>(n1) * sum0 - static_cast<__int128>(n0) * sum1;
  const u128 mag = static_cast<u128>(diff < 0 ? -diff : diff);
  return {mag * mag, static_cast<u128>(n0) * static_cast<u128>(n1)};
}

bool greater(const Split& a, const Split& b) { return mul_wide(a.num, b.den) > mul_wide(b.num, a.den); }

}  // namespace

MaskPlane apply_threshold(const ScoreMap& score, Threshold t) {
  MaskPlane m(score.width(), score.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.values[i] = (score.valid.values[i] && score.values.values[i] > t.t) ? 1 : 0;
  return m;
}

double between_class_variance(long long n0, long long sum0, long long n1, long long sum1) {
  if (n0 == 0 || n1 == 0) return 0.0;
  // n0*n1*(mu0-mu1)^2 / N^2 up to the constant 1/N^2, in bin-index units.
  const double diff = static_cast<double>(n1 * sum0 - n0 * sum1);
  return diff * diff / (static_cast<double>(n0) * static_cast<double>(n1));
}

Threshold otsu_threshold(const ScoreMap& score, int bins) {
  if (bins < 2) throw DataError("otsu: bins must be >= 2");
  if (!score.values.same_shape(score.valid)) throw DataError("otsu: score and valid planes differ in shape");
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < score.values.size(); ++i) {
    if (!score.valid.values[i]) continue;
    lo = std::min(lo, score.values.values[i]);
    hi = std::max(hi, score.values.values[i]);
  }
  if (!(hi > lo)) throw NumericError("otsu: degenerate input, fewer than two distinct valid values");

  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  std::vector<long long> hist(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < score.values.size(); ++i) {
    if (!score.valid.values[i]) continue;
    const double rel = (static_cast<double>(score.values.values[i]) - lo) / span;
    const int b = std::clamp(static_cast<int>(rel * bins), 0, bins - 1);
    ++hist[static_cast<std::size_t>(b)];
  }

  long long total_n = 0, total_sum = 0;
  for (int b = 0; b < bins; ++b) {
    total_n += hist[b];
    total_sum += hist[b] * b;
  }

  // Candidates are compared as exact fractions so near-equal splits are
  // ordered correctly; the lowest split wins exact ties.
  long long n0 = 0, sum0 = 0;
  Split best{0, 1};
  int best_k = 1;
  for (int k = 1; k < bins; ++k) {
    n0 += hist[k - 1];
    sum0 += hist[k - 1] * (k - 1);
    const Split v = split_of(n0, sum0, total_n - n0, total_sum - sum0);
    if (greater(v, best)) {
      best = v;
      best_k = k;
    }
  }
  return {static_cast<double>(lo) + span * best_k / bins};
}

Threshold select_threshold(std::span<const ScoreMap> scores, std::span<const MaskPlane> labels) {
  if (scores.empty()) throw DataError("select_threshold: empty list");
  if (scores.size() != labels.size()) throw DataError("select_threshold: score and label lists differ in length");

  constexpr int kSteps = 201;
  // cut_pos[j] counts positives whose first grid point >= score is j; a pixel
  // is predicted positive at every k < j.
  std::vector<long long> cut_pos(kSteps + 1, 0), cut_neg(kSteps + 1, 0);
  long long positives = 0;
  std::vector<double> grid(kSteps);
  for (int k = 0; k < kSteps; ++k) grid[k] = (k - 100) / 100.0;

  for (std::size_t s = 0; s < scores.size(); ++s) {
    const ScoreMap& sm = scores[s];
    const MaskPlane& lab = labels[s];
    if (!sm.values.same_shape(lab) || !sm.valid.same_shape(lab)) throw DataError("select_threshold: dimension mismatch");
    for (std::size_t i = 0; i < lab.size(); ++i) {
      if (!sm.valid.values[i]) continue;
      const bool pos = lab.values[i] != 0;
      positives += pos;
      const double v = sm.values.values[i];
      // Grid points strictly below v predict positive: k < first index with grid[k] >= v.
      const auto first_ge = std::lower_bound(grid.begin(), grid.end(), v) - grid.begin();
      ++(pos ? cut_pos : cut_neg)[static_cast<std::size_t>(first_ge)];
    }
  }
  std::vector<long long> tp(kSteps, 0), fp(kSteps, 0);
  long long above_pos = 0, above_neg = 0;
  for (int k = kSteps - 1; k >= 0; --k) {
    above_pos += cut_pos[k + 1];
    above_neg += cut_neg[k + 1];
    tp[k] = above_pos;
    fp[k] = above_neg;
  }
  if (positives == 0) throw DataError("select_threshold: labels contain no positive pixels, F1 undefined");

  // F1 = 2tp / (2tp + fp + fn); compare fractions exactly.
  int best = 0;
  for (int k = 1; k < kSteps; ++k) {
    const __int128 num_k = 2 * tp[k], den_k = 2 * tp[k] + fp[k] + (positives - tp[k]);
    const __int128 num_b = 2 * tp[best], den_b = 2 * tp[best] + fp[best] + (positives - tp[best]);
    if (num_k * den_b > num_b * den_k) best = k;
  }
  return {grid[best]};
}

}  // namespace mtmask
