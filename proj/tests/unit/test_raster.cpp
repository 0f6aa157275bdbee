#include "support.hpp"

#include <fstream>

#include "mtmask/dataset.hpp"
#include "mtmask/mtile.hpp"
#include "mtmask/scene.hpp"

using namespace mtmask;
using test_support::TempDir;

namespace {

TileStack small_tile() {
  TileStack t(5, 3, 30.0);
  for (int b = 0; b < kBandCount; ++b)
    for (std::size_t i = 0; i < t.pixel_count(); ++i) t.bands[b].values[i] = 0.01f * static_cast<float>(b * 100 + i);
  t.valid.at(0, 0) = 0;
  return t;
}

}  // namespace

TEST_CASE("plane indexing is row-major") {
  FloatPlane p(4, 2, 0.0f);
  p.at(3, 1) = 7.0f;
  CHECK(p.values[7] == 7.0f);
  CHECK(p.contains(3, 1));
  CHECK_FALSE(p.contains(4, 0));
  CHECK_FALSE(p.contains(0, -1));
}

TEST_CASE("mask names round-trip") {
  for (int m = 0; m < kMaskCount; ++m) CHECK(parse_mask_name(kMaskNames[m]) == kAllMasks[m]);
  CHECK_FALSE(parse_mask_name("sun_glint").has_value());
}

TEST_CASE("mask_fraction counts valid pixels only") {
  MaskPlane valid(4, 1, 1), mask(4, 1, 0);
  valid.values = {1, 1, 0, 1};
  mask.values = {1, 0, 1, 0};
  CHECK(mask_fraction(mask, valid) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(mask_fraction(mask, MaskPlane(4, 1, 0)), DataError);
}

TEST_CASE("tile check rejects non-finite valid pixels but tolerates them in no-data pixels") {
  TileStack t = small_tile();
  t.bands[2].at(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_NOTHROW(t.check());
  t.bands[2].at(1, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(t.check(), DataError);
}

TEST_CASE("tile, masks and dem survive a save/load round trip bit for bit") {
  TempDir dir("raster");
  const TileStack t = small_tile();
  save_tile(t, dir / "t.mtile");
  CHECK(load_tile(dir / "t.mtile") == t);

  MaskSet m(5, 3);
  m[MaskKind::cloud].at(2, 1) = 1;
  m[MaskKind::water].at(4, 2) = 1;
  save_masks(m, dir / "m.mtile");
  CHECK(load_masks(dir / "m.mtile") == m);

  Dem d{10.0, FloatPlane(5, 3, 120.5f)};
  d.elevation.at(1, 1) = -3.25f;
  save_dem(d, dir / "d.mtile");
  CHECK(load_dem(dir / "d.mtile") == d);
}

TEST_CASE("envelope header is a single JSON line followed by little-endian f32") {
  TempDir dir("envelope");
  save_planes(dir / "p.mtile", PlaneStack{2, 1, 30.0, {"a"}, {FloatPlane(2, 1, 1.0f)}});
  const std::string bytes = test_support::slurp(dir / "p.mtile");
  const auto nl = bytes.find('\n');
  REQUIRE(nl != std::string::npos);
  const auto header = ordered_json::parse(bytes.substr(0, nl));
  CHECK(header["w"] == 2);
  CHECK(header["planes"][0] == "a");
  REQUIRE(bytes.size() == nl + 1 + 8);
  // 1.0f = 0x3F800000, least significant byte first.
  CHECK(static_cast<unsigned char>(bytes[nl + 1]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[nl + 4]) == 0x3F);
}

TEST_CASE("malformed files raise format errors") {
  TempDir dir("bad");
  const PlaneStack s{3, 2, 30.0, {"x", "y"}, {FloatPlane(3, 2, 0.5f), FloatPlane(3, 2, 0.25f)}};
  save_planes(dir / "ok.mtile", s);
  const std::string good = test_support::slurp(dir / "ok.mtile");

  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  SUBCASE("truncated payload") { CHECK_THROWS_AS(load_planes(write("short", good.substr(0, good.size() - 4))), FormatError); }
  SUBCASE("odd byte count") { CHECK_THROWS_AS(load_planes(write("odd", good.substr(0, good.size() - 1))), FormatError); }
  SUBCASE("payload longer than declared") { CHECK_THROWS_AS(load_planes(write("long", good + std::string(4, '\0'))), FormatError); }
  SUBCASE("header not JSON") { CHECK_THROWS_AS(load_planes(write("hdr", "{w:3\n")), FormatError); }
  SUBCASE("header without width") {
    CHECK_THROWS_AS(load_planes(write("now", R"({"h":2,"pixel_size":30,"planes":[]})" "\n")), FormatError);
  }
  SUBCASE("missing named plane") { CHECK_THROWS_AS(load_tile(dir / "ok.mtile"), FormatError); }
  SUBCASE("non-binary mask plane") { CHECK_THROWS_AS(load_mask(dir / "ok.mtile", "x"), FormatError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_planes(dir / "absent.mtile"), DataError); }
}

TEST_CASE("scene directory lists the manifest order and falls back to a sorted scan") {
  TempDir dir("scenedir");
  SceneConfig cfg;
  cfg.width = cfg.height = 16;
  cfg.seed = 3;
  const Scene s = generate_scene(cfg);
  save_scene(s, "b", dir.path());
  save_scene(s, "a", dir.path());
  CHECK(SceneDir::open(dir.path()).ids == std::vector<std::string>{"a", "b"});

  write_json(dir / "manifest.json", ordered_json{{"scenes", {"b", "a"}}});
  CHECK(SceneDir::open(dir.path()).ids == std::vector<std::string>{"b", "a"});

  const ObservationMeta back = meta_from_json(read_json(dir / "a.meta.json"));
  CHECK(back.latitude == s.meta.latitude);
  CHECK(back.time.day_of_year() == s.meta.time.day_of_year());

  TempDir empty("empty");
  CHECK_THROWS_AS(SceneDir::open(empty.path()), DataError);
}
