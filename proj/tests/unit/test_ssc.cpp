#include "support.hpp"

#include <cmath>
#include <fstream>

#include "mtmask/scene.hpp"
#include "mtmask/ssc.hpp"

using namespace mtmask;
using test_support::TempDir;

namespace {

FeatureVector features(double red, double nir, Rng& rng) {
  FeatureVector f;
  f.good_count = 20;
  for (int b = 0; b < kBandCount; ++b) {
    const double base = b == 2 ? red : b == 3 ? nir : 0.05 + 0.01 * b + 0.2 * red;
    const double spread = 0.002 + 0.002 * rng.uniform();
    f.bands[b] = {base, base + 0.1 * spread, spread, base - 2 * spread, base + 2 * spread};
  }
  return f;
}

std::vector<SscRecord> synthetic_records(std::size_t n, std::uint64_t seed, const std::string& scene) {
  Rng rng(seed);
  std::vector<SscRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double red = rng.uniform(0.02, 0.12), nir = rng.uniform(0.005, 0.06);
    out.push_back({static_cast<int>(i), 0, ssc_truth(red, nir, rng.normal()), scene, features(red, nir, rng)});
  }
  return out;
}

SscFitConfig quick_config() {
  SscFitConfig c;
  c.hidden = {12, 8};
  c.epochs = 120;
  c.grid = 20;
  c.seed = 4;
  return c;
}

double single_rmse(const SscEnsemble& e, std::span<const SscRecord> recs, bool low) {
  double se = 0;
  for (const auto& r : recs) {
    const auto [o1, o2] = e.outputs(r.features);
    const double v = std::max(0.0, low ? o1 : o2);
    se += (v - r.ssc) * (v - r.ssc);
  }
  return std::sqrt(se / static_cast<double>(recs.size()));
}

}  // namespace

TEST_CASE("blend rule") {
  CHECK(ssc_blend(5, 30, 10, 20) == 5);       // low model confident
  CHECK(ssc_blend(15, 30, 10, 20) == 30);     // high model above t2
  CHECK(ssc_blend(15, 18, 10, 20) == 16.5);   // in between: average
  CHECK(ssc_blend(-3, 30, 10, 20) == 0);      // floored at zero
  CHECK(ssc_blend(5, 30, kInf, kInf) == 5);   // always low
  CHECK(ssc_blend(5, 30, -kInf, -kInf) == 30);  // always high
}

TEST_CASE("threshold axis spans the range with both infinities") {
  const auto a = threshold_axis(2.0, 12.0, 6);
  REQUIRE(a.size() == 8);
  CHECK(a.front() == -kInf);
  CHECK(a[1] == 2.0);
  CHECK(a[6] == 12.0);
  CHECK(a[3] == doctest::Approx(6.0));
  CHECK(a.back() == kInf);
}

TEST_CASE("feature scaler standardises with population std and leaves constants at scale 1") {
  Rng rng(1);
  auto recs = synthetic_records(50, 3, "s");
  for (auto& r : recs) r.features.bands[0].mean = 0.7;
  const FeatureScaler sc = FeatureScaler::fit(recs);
  CHECK(sc.scale[0] == 1.0);
  double sum = 0, sq = 0;
  for (const auto& r : recs) {
    const double z = sc.apply(r.features)[10];  // red mean
    sum += z;
    sq += z * z;
  }
  CHECK(sum / 50 == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(sq / 50 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("record CSV round-trips exactly") {
  TempDir dir("ssc_csv");
  std::vector<SscRecord> recs{{3, 4, 12.345678901234567, "scene_000", {}}, {0, 9, 1e-3, "b", {}}};
  write_ssc_csv(recs, dir / "r.csv");
  CHECK(test_support::slurp(dir / "r.csv").rfind("x,y,ssc_mg_per_l,scene_id\n", 0) == 0);
  const auto back = read_ssc_csv(dir / "r.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].ssc == recs[0].ssc);
  CHECK(back[1].scene_id == "b");
  CHECK(back[1].y == 9);

  std::ofstream(dir / "bad.csv") << "x,y,ssc_mg_per_l,scene_id\n1,2,notanumber,s\n";
  CHECK_THROWS_AS(read_ssc_csv(dir / "bad.csv"), DataError);
  std::ofstream(dir / "hdr.csv") << "a,b\n";
  CHECK_THROWS_AS(read_ssc_csv(dir / "hdr.csv"), DataError);
}

TEST_CASE("fitted thresholds minimise validation RMSE over the grid and beat both single models") {
  const auto train = synthetic_records(200, 10, "t");
  const auto val = synthetic_records(60, 11, "v");
  const SscFitConfig cfg = quick_config();
  const SscEnsemble e = fit_ensemble(train, val, cfg);
  CHECK(e.t1 <= e.t2);

  std::vector<double> o1, o2, y;
  double lo = kInf, hi = -kInf;
  for (const auto& r : val) {
    const auto [a, b] = e.outputs(r.features);
    o1.push_back(a);
    o2.push_back(b);
    y.push_back(r.ssc);
    lo = std::min(lo, r.ssc);
    hi = std::max(hi, r.ssc);
  }
  const double chosen = blend_rmse(o1, o2, y, e.t1, e.t2);
  const auto axis = threshold_axis(lo, hi, cfg.grid);
  for (double t1 : axis)
    for (double t2 : axis)
      if (t1 <= t2) CHECK(chosen <= blend_rmse(o1, o2, y, t1, t2));
  CHECK(chosen <= single_rmse(e, val, true));
  CHECK(chosen <= single_rmse(e, val, false));
}

TEST_CASE("fitting is deterministic and the saved ensemble predicts identically") {
  TempDir dir("ens");
  const auto train = synthetic_records(120, 20, "t");
  const auto val = synthetic_records(40, 21, "v");
  const SscEnsemble a = fit_ensemble(train, val, quick_config());
  const SscEnsemble b = fit_ensemble(train, val, quick_config());
  save_ensemble(a, dir / "a.json");
  save_ensemble(b, dir / "b.json");
  CHECK(test_support::slurp(dir / "a.json") == test_support::slurp(dir / "b.json"));

  const SscEnsemble back = load_ensemble(dir / "a.json");
  CHECK(back.t1 == a.t1);
  CHECK(back.t2 == a.t2);
  for (const auto& r : val) CHECK(ssc_predict(back, r.features) == ssc_predict(a, r.features));
}

TEST_CASE("ensemble files with infinite thresholds round-trip") {
  TempDir dir("ens_inf");
  SscEnsemble e;
  e.model_low = net::Mlp({kFeatureWidth, 4, 1}, 1);
  e.model_high = net::Mlp({kFeatureWidth, 4, 1}, 2);
  e.t1 = -kInf;
  e.t2 = kInf;
  for (auto& s : e.scaler.scale) s = 1.0;
  save_ensemble(e, dir / "e.json");
  const SscEnsemble back = load_ensemble(dir / "e.json");
  CHECK(back.t1 == -kInf);
  CHECK(back.t2 == kInf);

  std::ofstream(dir / "junk.json") << "{\"format\":\"something-else\"}\n";
  CHECK_THROWS_AS(load_ensemble(dir / "junk.json"), DataError);
}

TEST_CASE("empty splits and empty ranges are data errors") {
  const auto recs = synthetic_records(30, 1, "t");
  CHECK_THROWS_AS(fit_ensemble({}, recs, quick_config()), DataError);
  CHECK_THROWS_AS(fit_ensemble(recs, {}, quick_config()), DataError);
  SscFitConfig c = quick_config();
  c.low_max = -1.0;  // nothing at or below
  CHECK_THROWS_AS(fit_ensemble(recs, recs, c), DataError);
}
