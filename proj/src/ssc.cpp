#include "mtmask/ssc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtmask/mtile.hpp"
#include "mtmask/net/train.hpp"
#include "mtmask/rng.hpp"

namespace mtmask {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw DataError("ssc csv: bad " + what + " '" + s + "'");
  return v;
}

net::Tensor<float> design_matrix(std::span<const SscRecord> records, const FeatureScaler& scaler) {
  net::Tensor<float> x({static_cast<int>(records.size()), kFeatureWidth});
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto row = scaler.apply(records[r].features);
    std::copy(row.begin(), row.end(), x.ptr() + r * kFeatureWidth);
  }
  return x;
}

double model_output(const net::Mlp& m, const std::array<float, kFeatureWidth>& row) {
  net::Tensor<float> x({1, kFeatureWidth});
  std::copy(row.begin(), row.end(), x.ptr());
  return std::expm1(static_cast<double>(m.forward(x)[0]));
}

ordered_json threshold_to_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

double threshold_from_json(const ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw FormatError("ssc ensemble: bad threshold '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

void write_ssc_csv(std::span<const SscRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "x,y,ssc_mg_per_l,scene_id\n";
  for (const auto& r : records) out << r.x << ',' << r.y << ',' << format_double(r.ssc) << ',' << r.scene_id << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<SscRecord> read_ssc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,ssc_mg_per_l,scene_id")
    throw FormatError("ssc csv: expected header x,y,ssc_mg_per_l,scene_id in " + path.string());
  std::vector<SscRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) throw FormatError("ssc csv: expected 4 columns in '" + line + "'");
    SscRecord r;
    r.x = parse_number<int>(cells[0], "x");
    r.y = parse_number<int>(cells[1], "y");
    r.ssc = parse_number<double>(cells[2], "ssc");
    if (!(r.ssc >= 0.0)) throw DataError("ssc csv: negative or non-finite SSC '" + cells[2] + "'");
    r.scene_id = cells[3];
    out.push_back(std::move(r));
  }
  return out;
}

FeatureScaler FeatureScaler::fit(std::span<const SscRecord> records) {
  if (records.empty()) throw DataError("feature scaler: no records");
  FeatureScaler s;
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    const auto v = r.features.values();
    for (int k = 0; k < kFeatureWidth; ++k) s.mean[k] += v[k];
  }
  for (auto& m : s.mean) m /= n;
  std::array<double, kFeatureWidth> var{};
  for (const auto& r : records) {
    const auto v = r.features.values();
    for (int k = 0; k < kFeatureWidth; ++k) var[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
  }
  for (int k = 0; k < kFeatureWidth; ++k) {
    const double sd = std::sqrt(var[k] / n);
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::array<float, kFeatureWidth> FeatureScaler::apply(const FeatureVector& f) const {
  const auto v = f.values();
  std::array<float, kFeatureWidth> out{};
  for (int k = 0; k < kFeatureWidth; ++k) out[k] = static_cast<float>((v[k] - mean[k]) / scale[k]);
  return out;
}

double ssc_blend(double o1, double o2, double t1, double t2) {
  double v;
  if (o1 < t1)
    v = o1;
  else if (o2 > t2)
    v = o2;
  else
    v = (o1 + o2) / 2.0;
  return std::max(v, 0.0);
}

std::pair<double, double> SscEnsemble::outputs(const FeatureVector& f) const {
  const auto row = scaler.apply(f);
  return {model_output(model_low, row), model_output(model_high, row)};
}

double ssc_predict(const SscEnsemble& ens, const FeatureVector& f) {
  const auto [o1, o2] = ens.outputs(f);
  return ssc_blend(o1, o2, ens.t1, ens.t2);
}

std::vector<double> threshold_axis(double lo, double hi, int n) {
  std::vector<double> axis{-kInf};
  for (int i = 0; i < n; ++i) axis.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  axis.push_back(kInf);
  return axis;
}

double blend_rmse(std::span<const double> o1, std::span<const double> o2, std::span<const double> y, double t1, double t2) {
  if (o1.size() != y.size() || o2.size() != y.size() || y.empty()) throw DataError("blend_rmse: mismatched or empty inputs");
  double sq = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - ssc_blend(o1[i], o2[i], t1, t2);
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(y.size()));
}

net::Mlp train_regressor(std::span<const SscRecord> records, const FeatureScaler& scaler, const SscFitConfig& config,
                         std::uint64_t stream) {
  if (records.empty()) throw DataError("ssc: empty training subset");
  std::vector<int> sizes{kFeatureWidth};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  const Rng root = Rng(config.seed).derive(stream);
  net::Mlp mlp(sizes, root.derive(0).next());

  const net::Tensor<float> x_all = design_matrix(records, scaler);
  std::vector<float> y_all(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) y_all[i] = static_cast<float>(std::log1p(records[i].ssc));

  auto params = mlp.parameters();
  net::Optimizer opt(net::OptimizerKind::adam, config.learning_rate, 0.9, params);
  std::vector<std::size_t> order(records.size());
  const std::size_t bs = static_cast<std::size_t>(std::max(1, config.batch_size));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = root.derive(static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const int n = static_cast<int>(end - start);
      net::Tensor<float> xb({n, kFeatureWidth});
      for (int r = 0; r < n; ++r)
        std::copy_n(x_all.ptr() + order[start + r] * kFeatureWidth, kFeatureWidth, xb.ptr() + r * kFeatureWidth);
      net::Mlp::Cache cache;
      const net::Tensor<float> pred = mlp.forward(xb, &cache);
      net::Tensor<float> grad({n, 1});
      double loss = 0;
      for (int r = 0; r < n; ++r) {
        const double e = static_cast<double>(pred[r]) - y_all[order[start + r]];
        loss += e * e;
        grad[r] = static_cast<float>(2.0 * e / n);
      }
      if (!std::isfinite(loss)) throw NumericError("ssc: non-finite regression loss at epoch " + std::to_string(epoch));
      auto grads = mlp.zero_gradients();
      mlp.backward(cache, grad, grads);
      opt.step(params, grads);
    }
  }
  return mlp;
}

SscEnsemble fit_ensemble(std::span<const SscRecord> train, std::span<const SscRecord> val, const SscFitConfig& config) {
  if (train.empty() || val.empty()) throw DataError("ssc fit: empty train or validation split");
  std::vector<SscRecord> low, high;
  for (const auto& r : train) {
    if (r.ssc <= config.low_max) low.push_back(r);
    if (r.ssc >= config.high_min) high.push_back(r);
  }
  if (low.empty()) throw DataError("ssc fit: no training record with SSC <= " + format_double(config.low_max));
  if (high.empty()) throw DataError("ssc fit: no training record with SSC >= " + format_double(config.high_min));

  SscEnsemble ens;
  ens.scaler = FeatureScaler::fit(train);
  ens.model_low = train_regressor(low, ens.scaler, config, 1);
  ens.model_high = train_regressor(high, ens.scaler, config, 2);

  std::vector<double> o1, o2, y;
  for (const auto& r : val) {
    const auto [a, b] = ens.outputs(r.features);
    o1.push_back(a);
    o2.push_back(b);
    y.push_back(r.ssc);
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const auto axis = threshold_axis(*lo, *hi, config.grid);
  double best = kInf;
  // The axis is ascending, so a strict improvement test keeps the
  // lexicographically smallest optimum.
  for (double t1 : axis)
    for (double t2 : axis) {
      if (t1 > t2) continue;
      const double e = blend_rmse(o1, o2, y, t1, t2);
      if (e < best) {
        best = e;
        ens.t1 = t1;
        ens.t2 = t2;
      }
    }
  return ens;
}

void save_ensemble(const SscEnsemble& ens, const std::filesystem::path& path) {
  ordered_json h;
  h["format"] = "mtmask-ssc-ensemble";
  h["version"] = 1;
  h["low_sizes"] = ens.model_low.sizes();
  h["high_sizes"] = ens.model_high.sizes();
  h["thresholds"] = {{"t1", threshold_to_json(ens.t1)}, {"t2", threshold_to_json(ens.t2)}};
  h["scaler"] = {{"mean", ens.scaler.mean}, {"scale", ens.scaler.scale}};
  std::vector<float> payload;
  for (const net::Mlp* m : {&ens.model_low, &ens.model_high})
    for (const auto* p : m->parameters()) payload.insert(payload.end(), p->data.begin(), p->data.end());
  h["count"] = payload.size();
  write_envelope(path, h, payload);
}

SscEnsemble load_ensemble(const std::filesystem::path& path) {
  Envelope env = read_envelope(path);
  SscEnsemble ens;
  try {
    const auto& h = env.header;
    if (h.at("format").get<std::string>() != "mtmask-ssc-ensemble") throw FormatError("not an SSC ensemble: " + path.string());
    ens.model_low = net::Mlp(h.at("low_sizes").get<std::vector<int>>(), 0);
    ens.model_high = net::Mlp(h.at("high_sizes").get<std::vector<int>>(), 0);
    ens.t1 = threshold_from_json(h.at("thresholds").at("t1"));
    ens.t2 = threshold_from_json(h.at("thresholds").at("t2"));
    ens.scaler.mean = h.at("scaler").at("mean").get<std::array<double, kFeatureWidth>>();
    ens.scaler.scale = h.at("scaler").at("scale").get<std::array<double, kFeatureWidth>>();
    if (h.at("count").get<std::size_t>() != env.payload.size()) throw FormatError("truncated payload in " + path.string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed SSC ensemble header in " + path.string() + ": " + e.what());
  }
  std::size_t offset = 0;
  for (net::Mlp* m : {&ens.model_low, &ens.model_high})
    for (auto* p : m->parameters()) {
      if (offset + p->size() > env.payload.size()) throw FormatError("truncated payload in " + path.string());
      std::copy_n(env.payload.begin() + static_cast<std::ptrdiff_t>(offset), p->size(), p->data.begin());
      offset += p->size();
    }
  if (offset != env.payload.size()) throw FormatError("SSC ensemble payload longer than descriptor in " + path.string());
  return ens;
}

}  // namespace mtmask
