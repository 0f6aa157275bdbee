#include "mtmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mtmask {

Confusion confusion(const MaskPlane& pred, const MaskPlane& label, const MaskPlane& valid) {
  if (!pred.same_shape(label) || !pred.same_shape(valid)) throw DataError("confusion: dimension mismatch");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.values[i]) continue;
    const bool p = pred.values[i] != 0;
    const bool l = label.values[i] != 0;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {
Ratio ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

PixelMetrics pixel_metrics(const Confusion& c) {
  PixelMetrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  return m;
}

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("percentile of empty data");
  const double h = (sorted.size() - 1) * std::clamp(p, 0.0, 100.0) / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw DataError("regression_metrics: length mismatch");
  if (y.empty()) throw DataError("regression_metrics: empty input");
  const std::size_t n = y.size();
  std::vector<double> abs_err(n);
  double sq = 0, ab = 0, signed_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - y_hat[i];
    sq += e * e;
    ab += std::abs(e);
    signed_sum += e;
    abs_err[i] = std::abs(e);
  }
  RegressionMetrics r;
  r.count = n;
  r.rmse = std::sqrt(sq / n);
  r.mae = ab / n;
  r.bias = signed_sum / n;
  std::sort(abs_err.begin(), abs_err.end());
  r.abs_min = abs_err.front();
  r.abs_max = abs_err.back();
  r.abs_median = percentile_sorted(abs_err, 50);
  r.abs_p75 = percentile_sorted(abs_err, 75);
  r.abs_p90 = percentile_sorted(abs_err, 90);
  r.abs_p95 = percentile_sorted(abs_err, 95);
  double var = 0;
  for (double a : abs_err) var += (a - r.mae) * (a - r.mae);
  r.abs_std = std::sqrt(var / n);
  return r;
}

RatioSummary summarize(std::span<const Ratio> values) {
  RatioSummary s;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) {
      ++s.skipped;
      continue;
    }
    sum += *v;
    ++n;
  }
  if (n > 0) s.mean = sum / n;
  return s;
}

namespace {
nlohmann::json ratio_json(const Ratio& r) { return r ? nlohmann::json(*r) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json to_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

nlohmann::json to_json(const PixelMetrics& m) {
  return {{"precision", ratio_json(m.precision)}, {"recall", ratio_json(m.recall)}, {"f1", ratio_json(m.f1)},
          {"iou", ratio_json(m.iou)}};
}

nlohmann::json to_json(const RegressionMetrics& m) {
  return {{"count", m.count},       {"rmse", m.rmse},       {"mae", m.mae},         {"bias", m.bias},
          {"abs_median", m.abs_median}, {"abs_max", m.abs_max}, {"abs_min", m.abs_min}, {"abs_std", m.abs_std},
          {"abs_p75", m.abs_p75},   {"abs_p90", m.abs_p90}, {"abs_p95", m.abs_p95}};
}

std::vector<Confusion> MaskEvaluation::pooled() const {
  std::vector<Confusion> out(mask_names.size());
  for (const auto& row : per_scene)
    for (std::size_t m = 0; m < row.size(); ++m) out[m] += row[m];
  return out;
}

nlohmann::json MaskEvaluation::report() const {
  nlohmann::json j;
  const auto pool = pooled();
  nlohmann::json pooled_j = nlohmann::json::object();
  for (std::size_t m = 0; m < mask_names.size(); ++m) {
    auto e = to_json(pixel_metrics(pool[m]));
    e["confusion"] = to_json(pool[m]);
    pooled_j[mask_names[m]] = e;
  }
  j["pooled"] = pooled_j;

  nlohmann::json scenes = nlohmann::json::array();
  for (std::size_t s = 0; s < per_scene.size(); ++s) {
    nlohmann::json sj;
    sj["scene"] = scene_ids[s];
    for (std::size_t m = 0; m < mask_names.size(); ++m) {
      auto e = to_json(pixel_metrics(per_scene[s][m]));
      e["confusion"] = to_json(per_scene[s][m]);
      sj[mask_names[m]] = e;
    }
    scenes.push_back(sj);
  }
  j["scenes"] = scenes;

  nlohmann::json means = nlohmann::json::object();
  for (std::size_t m = 0; m < mask_names.size(); ++m) {
    std::vector<Ratio> f1s;
    for (const auto& row : per_scene) f1s.push_back(pixel_metrics(row[m]).f1);
    const auto s = summarize(f1s);
    means[mask_names[m]] = {{"mean_f1", ratio_json(s.mean)}, {"skipped", s.skipped}};
  }
  j["per_scene_mean"] = means;
  return j;
}

std::string MaskEvaluation::csv() const {
  std::ostringstream out;
  out << "scene,mask,tp,fp,fn,tn,precision,recall,f1,iou\n";
  auto cell = [](const Ratio& r) {
    if (!r) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *r);
    return std::string(buf);
  };
  auto row = [&](const std::string& scene, std::size_t m, const Confusion& c) {
    const auto pm = pixel_metrics(c);
    out << scene << ',' << mask_names[m] << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ','
        << cell(pm.precision) << ',' << cell(pm.recall) << ',' << cell(pm.f1) << ',' << cell(pm.iou) << '\n';
  };
  for (std::size_t s = 0; s < per_scene.size(); ++s)
    for (std::size_t m = 0; m < mask_names.size(); ++m) row(scene_ids[s], m, per_scene[s][m]);
  const auto pool = pooled();
  for (std::size_t m = 0; m < mask_names.size(); ++m) row("pooled", m, pool[m]);
  return out.str();
}

}  // namespace mtmask
