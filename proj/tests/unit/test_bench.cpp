#include "support.hpp"

#include <cmath>

#include "mtmask/bench.hpp"
#include "mtmask/scene.hpp"

using namespace mtmask;
using namespace mtmask::bench;

namespace {

std::vector<BenchScene> bench_scenes(int n, int side) {
  std::vector<BenchScene> out;
  for (int i = 0; i < n; ++i) {
    SceneConfig cfg;
    cfg.seed = 500 + static_cast<std::uint64_t>(i);
    cfg.width = cfg.height = side;
    Scene s = generate_scene(cfg);
    BenchScene b{"s" + std::to_string(i), std::move(s.tile), std::move(s.dem), s.meta, {}};
    for (const auto& p : s.ssc) b.locations.emplace_back(p.x, p.y);
    out.push_back(std::move(b));
  }
  return out;
}

TileStack uniform_tile(std::array<float, kBandCount> bands) {
  TileStack t(2, 1);
  for (int b = 0; b < kBandCount; ++b) std::fill(t.bands[b].values.begin(), t.bands[b].values.end(), bands[b]);
  std::fill(t.valid.values.begin(), t.valid.values.end(), std::uint8_t{1});
  t.valid.values[1] = 0;
  return t;
}

}  // namespace

TEST_CASE("improvement percentage of the reference timings") {
  const Speedup s = speedup(18.757, 0.601);
  CHECK(std::round(s.improvement_percent * 100.0) / 100.0 == doctest::Approx(96.80).epsilon(1e-12));
  CHECK(s.ratio == doctest::Approx(18.757 / 0.601));
  CHECK_THROWS_AS(speedup(0.0, 1.0), DataError);
  CHECK_THROWS_AS(speedup(1.0, -1.0), DataError);
}

TEST_CASE("both pipelines report every stage key") {
  const auto scenes = bench_scenes(3, 48);
  const net::MultiTaskModel model(net::Architecture{.widths = {4, 4, 4}, .attention = false}, 1);
  std::size_t sites = 0;
  for (const auto& s : scenes) sites += s.locations.size();
  REQUIRE(sites > 0);
  const BenchReport std_r = run_pipeline(Variant::standard, scenes, nullptr);
  const BenchReport mt_r = run_pipeline(Variant::multitask, scenes, &model, BenchOptions{.repeats = 2});
  for (const auto* r : {&std_r, &mt_r}) {
    REQUIRE(r->stages.size() == kStageKeys.size());
    double sum = 0;
    for (std::size_t i = 0; i < kStageKeys.size(); ++i) {
      CHECK(r->stages[i].first == kStageKeys[i]);
      CHECK(r->stages[i].second >= 0.0);
      sum += r->stages[i].second;
    }
    CHECK(r->total == doctest::Approx(sum));
    CHECK(r->scene_count == 3);
    CHECK(r->comparable);
    CHECK(r->features_extracted + r->features_skipped == sites);
    const auto j = r->to_json();
    for (const char* key : {"variant", "stages", "substages", "total", "peak_bytes", "threads", "comparable", "machine"})
      CHECK(j.contains(key));
  }
  CHECK(std_r.mask_computations == 15);
  CHECK(std_r.forward_passes == 0);
  CHECK(mt_r.forward_passes == 3);
  CHECK(mt_r.repeats == 2);
  CHECK(mt_r.stage("terrain_shadow") == 0.0);
  CHECK(mt_r.stage("sun_position") == 0.0);
  CHECK(std_r.stage("terrain_shadow") > 0.0);
  CHECK_THROWS_AS(std_r.stage("nonsense"), DataError);

  const std::string csv = reports_csv({std_r, mt_r});
  CHECK(csv.rfind("variant,stage,seconds\n", 0) == 0);
  CHECK(csv.find("standard,terrain_shadow,") != std::string::npos);
  CHECK(csv.find("multitask,total,") != std::string::npos);
  CHECK(csv.find("multitask,peak_bytes,") != std::string::npos);

  BenchReport fewer = mt_r;
  fewer.scene_count = 2;
  CHECK_THROWS_AS(speedup(std_r, fewer), DataError);
}

TEST_CASE("pipeline input validation") {
  auto scenes = bench_scenes(1, 32);
  CHECK_THROWS_AS(run_pipeline(Variant::multitask, scenes, nullptr), DataError);
  CHECK_THROWS_AS(run_pipeline(Variant::standard, {}, nullptr), DataError);
  scenes[0].dem.elevation = FloatPlane(16, 16);
  CHECK_THROWS_AS(run_pipeline(Variant::standard, scenes, nullptr), DataError);
  CHECK(variant_name(parse_variant("multitask")) == "multitask");
  CHECK_THROWS_AS(parse_variant("fast"), UsageError);
}

TEST_CASE("standard spectral rules") {
  const StandardRules rules;
  // Dark, green-over-SWIR water.
  const TileStack water = uniform_tile({0.05f, 0.06f, 0.04f, 0.02f, 0.01f, 0.01f});
  CHECK(standard_water(water, rules).values == std::vector<std::uint8_t>{1, 0});
  CHECK(standard_cloud(water, rules).values == std::vector<std::uint8_t>{0, 0});
  // Dark but also water, so not cloud shadow.
  CHECK(standard_cloud_shadow(water, standard_water(water, rules), rules).values == std::vector<std::uint8_t>{0, 0});
  CHECK(standard_cloud_shadow(water, MaskPlane(2, 1, 0), rules).values == std::vector<std::uint8_t>{1, 0});

  const TileStack cloud = uniform_tile({0.6f, 0.6f, 0.6f, 0.6f, 0.5f, 0.4f});
  CHECK(standard_cloud(cloud, rules).values == std::vector<std::uint8_t>{1, 0});
  CHECK(standard_snow(cloud, rules).values == std::vector<std::uint8_t>{0, 0});

  const TileStack snow = uniform_tile({0.8f, 0.8f, 0.7f, 0.6f, 0.1f, 0.05f});
  CHECK(standard_snow(snow, rules).values == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("grid alignment round trip") {
  Rng rng(8);
  const MaskPlane m = test_support::random_mask(13, 9, 0.4, rng);
  CHECK(align_through_offset_grid(m, 0.0) == m);
  const MaskPlane ones(13, 9, 1);
  CHECK(align_through_offset_grid(ones, 1.0) == ones);
  const MaskPlane zeros(13, 9, 0);
  CHECK(align_through_offset_grid(zeros, 0.5) == zeros);
}
