#include "support.hpp"

#include <cmath>
#include <numbers>

#include "mtmask/net/loss.hpp"
#include "mtmask/net/model.hpp"
#include "mtmask/scene.hpp"
#include "oracles/nn_oracle.hpp"

using namespace mtmask;
using namespace mtmask::net;
using test_support::random_tensor;

namespace {

Architecture small_arch(bool attention, bool skip) {
  Architecture a;
  a.widths = {4, 6};
  a.attention = attention;
  a.skip = skip;
  return a;
}

}  // namespace

TEST_CASE("inference reproduces the training forward pass exactly") {
  Rng rng(11);
  for (bool attention : {false, true}) {
    for (bool skip : {false, true}) {
      const MultiTaskModel model(small_arch(attention, skip), 3);
      const auto x = random_tensor<float>({12, 16, kBandCount}, rng);
      Activations<float> acts;
      const auto trained = model.forward(x, acts);
      const auto inferred = model.infer(x);
      REQUIRE(trained.shape == std::vector<int>{12, 16, kMaskCount});
      CHECK(trained.data == inferred.data);
    }
  }
}

TEST_CASE("the reference architecture produces probabilities for all five masks") {
  const MultiTaskModel model(Architecture{}, 1);
  CHECK(model.head_count() == kMaskCount);
  SceneConfig cfg;
  cfg.seed = 4;
  cfg.width = 32;
  cfg.height = 24;
  const Scene s = generate_scene(cfg);
  const Prediction pred = multitask_forward(model, s.tile);
  REQUIRE(pred.probs.size() == 5);
  for (int m = 0; m < kMaskCount; ++m) {
    CHECK(pred.kinds[m] == kAllMasks[m]);
    CHECK(pred.probs[m].width == 32);
    for (float v : pred.probs[m].values) CHECK((v > 0.0f && v < 1.0f));
  }
}

TEST_CASE("a head's output does not depend on the other heads") {
  Rng rng(5);
  const MultiTaskModel multi(Architecture{.widths = {4, 8}}, 9);
  const auto x = random_tensor<float>({16, 16, kBandCount}, rng);
  const auto all = multi.infer(x);
  for (int m = 0; m < kMaskCount; ++m) {
    MultiTaskModel single(single_task_variant(multi.architecture(), kAllMasks[m]), 9);
    auto dst = single.parameters();
    const auto src = multi.parameters();
    const std::size_t hb = multi.backbone_parameter_count();
    for (std::size_t i = 0; i < hb; ++i) *dst[i] = *src[i];
    *dst[hb] = *src[hb + 2 * m];
    *dst[hb + 1] = *src[hb + 2 * m + 1];
    const auto one = single.infer(x);
    for (std::size_t p = 0; p < one.size(); ++p) REQUIRE(one[p] == all[p * kMaskCount + m]);
  }
}

TEST_CASE("single-task variants keep the backbone and swap the heads") {
  const Architecture ref;
  const Architecture snow = single_task_variant(ref, "snow_ice");
  CHECK(snow.same_backbone(ref));
  CHECK(snow.heads == std::vector<MaskKind>{MaskKind::snow_ice});
  CHECK_THROWS_AS(single_task_variant(ref, "fog"), DataError);
}

TEST_CASE("architecture validation") {
  CHECK_THROWS_AS(MultiTaskModel(Architecture{.widths = {}}, 0), DataError);
  CHECK_THROWS_AS(MultiTaskModel(Architecture{.widths = {4, 0}}, 0), DataError);
  Architecture dup;
  dup.heads = {MaskKind::water, MaskKind::water};
  CHECK_THROWS_AS(dup.check(), DataError);
  Architecture none;
  none.heads.clear();
  CHECK_THROWS_AS(none.check(), DataError);

  const MultiTaskModel model(Architecture{.widths = {4, 4, 4}}, 0);
  Rng rng(1);
  CHECK_THROWS_AS(model.infer(random_tensor<float>({4, 16, kBandCount}, rng)), DataError);
  CHECK_THROWS_AS(model.infer(random_tensor<float>({16, 16, 3}, rng)), DataError);
}

TEST_CASE("seeded initialisation is reproducible and seed dependent") {
  const MultiTaskModel a(Architecture{}, 21), b(Architecture{}, 21), c(Architecture{}, 22);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(*pa[i] == *pb[i]);
    any_diff = any_diff || !(*pa[i] == *pc[i]);
  }
  CHECK(any_diff);
  CHECK(a.parameter_names().size() == pa.size());
  CHECK(a.parameter_names().front() == "conv0.kernel");
  CHECK(a.parameter_names().back() == "head.terrain_shadow.bias");
  // Biases start at zero; kernels stay inside the fan-in bound.
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->rank() == 1) {
      for (float v : pa[i]->data) CHECK(v == 0.0f);
    }
  }
  const auto& k0 = *pa[0];
  const double bound = std::sqrt(6.0 / (9.0 * kBandCount));
  for (float v : k0.data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("float to double and back preserves every parameter") {
  const MultiTaskModel m(Architecture{.widths = {4, 8}}, 2);
  const auto round = m.cast<double>().cast<float>();
  const auto a = m.parameters(), b = round.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  CHECK(round.architecture() == m.architecture());
}

TEST_CASE("input normalisation maps reflectance to [-1, 1] and zeroes invalid pixels") {
  TileStack t(3, 2, 30.0);
  for (int b = 0; b < kBandCount; ++b)
    for (std::size_t p = 0; p < t.pixel_count(); ++p) t.bands[b].values[p] = 0.25f * static_cast<float>(p % 5);
  t.valid.values = {1, 1, 1, 0, 1, 1};
  const auto x = normalize_input(t);
  REQUIRE(x.shape == std::vector<int>{2, 3, kBandCount});
  for (std::size_t p = 0; p < t.pixel_count(); ++p) {
    for (int b = 0; b < kBandCount; ++b) {
      const float want = t.valid.values[p] ? (t.bands[b].values[p] - 0.5f) / 0.5f : 0.0f;
      CHECK(x[p * kBandCount + b] == want);
    }
  }
}

TEST_CASE("binarisation is strict at one half") {
  Prediction pred;
  pred.kinds = {MaskKind::cloud};
  FloatPlane p(4, 1);
  p.values = {0.2f, 0.5f, 0.50001f, 0.9f};
  pred.probs = {p};
  const MaskSet m = binarize(pred, 4, 1);
  CHECK(m[MaskKind::cloud].values == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(m[MaskKind::water].values == std::vector<std::uint8_t>{0, 0, 0, 0});
  CHECK_THROWS_AS(binarize(pred, 3, 1), DataError);
}

TEST_CASE("uninformative predictions cost ln 2 per mask") {
  SceneConfig cfg;
  cfg.seed = 8;
  cfg.width = cfg.height = 32;
  const Scene s = generate_scene(cfg);
  Prediction pred;
  for (MaskKind k : kAllMasks) {
    pred.kinds.push_back(k);
    pred.probs.emplace_back(32, 32, 0.5f);
  }
  CHECK(std::abs(multitask_loss(pred, s.masks, s.tile.valid) - 5.0 * std::numbers::ln2) < 1e-6);
}

TEST_CASE("the multi-task loss agrees with the reference cross entropy") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 3 + static_cast<int>(rng.below(8)), h = 3 + static_cast<int>(rng.below(8));
    MaskSet labels(w, h);
    Prediction pred;
    MaskPlane valid = test_support::random_mask(w, h, 0.8, rng);
    valid.values[0] = 1;
    std::vector<std::vector<double>> probs, lab;
    for (MaskKind k : kAllMasks) {
      labels[k] = test_support::random_mask(w, h, 0.3, rng);
      FloatPlane p(w, h);
      for (auto& v : p.values) v = static_cast<float>(rng.uniform());
      if (trial % 5 == 0) p.values[0] = 0.0f;  // exercises the clamp
      pred.kinds.push_back(k);
      pred.probs.push_back(p);
      probs.emplace_back(p.values.begin(), p.values.end());
      lab.emplace_back(labels[k].values.begin(), labels[k].values.end());
    }
    const std::vector<bool> vb(valid.values.begin(), valid.values.end());
    const double want = oracle::bce(probs, lab, vb);
    CHECK(multitask_loss(pred, labels, valid) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("loss input errors") {
  MaskSet labels(2, 2);
  Prediction pred{{MaskKind::water}, {FloatPlane(2, 2, 0.3f)}};
  CHECK_THROWS_AS(multitask_loss(pred, labels, MaskPlane(2, 2, 0)), DataError);
  CHECK_THROWS_AS(multitask_loss(pred, labels, MaskPlane(3, 2, 1)), DataError);
}
