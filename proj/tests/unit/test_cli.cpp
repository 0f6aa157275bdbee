#include "support.hpp"

#include <json.hpp>
#include <sstream>

#include "mtmask/cli.hpp"

using test_support::slurp;
using test_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mtmask");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mtmask::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json error_of(const Run& r) {
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j.at("exit").get<int>() == r.code);
  CHECK(!j.at("message").get<std::string>().empty());
  CHECK(r.err.find('\n') == r.err.size() - 1);
  return j;
}

Run gen(const fs::path& out, int n = 3, std::uint64_t seed = 5) {
  return run({"gen", "--seed", std::to_string(seed), "--n", std::to_string(n), "--width", "32", "--height", "32", "--out",
              out.string()});
}

}  // namespace

TEST_CASE("gen is deterministic for a seed") {
  TempDir dir("cli_gen");
  REQUIRE(gen(dir / "a").code == 0);
  REQUIRE(gen(dir / "b").code == 0);
  REQUIRE(gen(dir / "c", 3, 6).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto name = e.path().filename();
    CHECK(slurp(e.path()) == slurp(dir / "b" / name));
    ++files;
  }
  CHECK(files >= 3 * 4 + 2);
  CHECK(slurp(dir / "a" / "scene_000.tile.mtile") != slurp(dir / "c" / "scene_000.tile.mtile"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.at("scenes").size() == 3);
}

TEST_CASE("predicting the labels themselves scores a perfect F1") {
  TempDir dir("cli_eval");
  REQUIRE(gen(dir / "scenes").code == 0);
  fs::create_directories(dir / "pred");
  // Label files share the prediction layout: one plane per mask.
  for (const auto& e : fs::directory_iterator(dir / "scenes")) {
    const std::string name = e.path().filename().string();
    const auto pos = name.find(".masks.mtile");
    if (pos != std::string::npos) fs::copy_file(e.path(), dir / "pred" / (name.substr(0, pos) + ".pred.mtile"));
  }
  const Run r = run({"eval", "--pred", (dir / "pred").string(), "--labels", (dir / "scenes").string(), "--out",
                     (dir / "report").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = nlohmann::json::parse(r.out);
  for (const auto& [mask, f1] : j.at("pooled_f1").items())
    if (!f1.is_null()) CHECK_MESSAGE(f1.get<double>() == 1.0, mask);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "report.csv"));
}

TEST_CASE("train, predict, fuse and bench run end to end") {
  TempDir dir("cli_e2e");
  REQUIRE(gen(dir / "scenes", 2).code == 0);
  const std::string scenes = (dir / "scenes").string(), ckpt = (dir / "m.ckpt").string();
  const std::vector<std::string> train_args{"train", "--data", scenes, "--out", ckpt, "--epochs", "3", "--widths", "4,8",
                                            "--attention", "false", "--seed", "2"};
  const Run t = run(train_args);
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(nlohmann::json::parse(t.out).is_object());
  CHECK(fs::exists(dir / "m.loss.csv"));

  const std::string first = slurp(ckpt);
  REQUIRE(run(train_args).code == 0);
  CHECK(slurp(ckpt) == first);

  const Run p = run({"predict", "--checkpoint", ckpt, "--data", scenes, "--out", (dir / "pred").string()});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  CHECK(fs::exists(dir / "pred" / "scene_000.pred.mtile"));

  const Run f = run({"fuse", "--data", scenes, "--masks", (dir / "pred").string(), "--out", (dir / "good").string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  CHECK(fs::exists(dir / "good" / "scene_001.good.mtile"));

  const Run b = run({"bench", "--scenes", scenes, "--variant", "both", "--checkpoint", ckpt, "--out", (dir / "bench").string()});
  REQUIRE_MESSAGE(b.code == 0, b.err);
  const auto j = nlohmann::json::parse(slurp(dir / "bench.json"));
  CHECK(j.at("reports").size() == 2);
  CHECK(j.at("speedup").contains("improvement_percent"));
  CHECK(fs::exists(dir / "bench.csv"));

  const Run missing = run({"bench", "--scenes", scenes, "--variant", "multitask", "--out", (dir / "x").string()});
  CHECK(missing.code == 2);
  CHECK(error_of(missing).at("error") == "usage");
}

TEST_CASE("settings come from a config file and flags take precedence") {
  TempDir dir("cli_cfg");
  {
    std::ofstream(dir / "cfg.json") << R"({"seed": 9, "n": 4, "width": 40})";
  }
  const Run shown = run({"gen", "--config", (dir / "cfg.json").string(), "--n", "2", "--show-config"});
  REQUIRE_MESSAGE(shown.code == 0, shown.err);
  const auto j = nlohmann::json::parse(shown.out);
  CHECK(j.at("seed") == 9);
  CHECK(j.at("n") == 2);
  CHECK(j.at("width") == 40);
  CHECK(!fs::exists(dir / "scenes"));

  {
    std::ofstream(dir / "bad.json") << R"({"colour": "blue"})";
  }
  const Run bad = run({"gen", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(bad.code == 2);
  CHECK(error_of(bad).at("error") == "usage");
}

TEST_CASE("errors are single JSON lines with the documented exit codes") {
  TempDir dir("cli_err");
  const Run none = run({});
  CHECK(none.code == 2);
  error_of(none);

  const Run unknown = run({"gen", "--bogus", "1"});
  CHECK(unknown.code == 2);

  const Run infeasible = run({"gen", "--water", "0.9", "--cloud", "0.5", "--out", (dir / "o").string()});
  CHECK(infeasible.code == 3);
  CHECK(error_of(infeasible).at("error") == "data");

  const Run no_data = run({"eval", "--pred", (dir / "nothing").string(), "--labels", (dir / "nothing").string(), "--out",
                           (dir / "r").string()});
  CHECK(no_data.code == 3);
  error_of(no_data);

  const Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("gen") != std::string::npos);
}

TEST_CASE("ssc fit is deterministic and the ensemble is no worse on validation") {
  TempDir dir("cli_ssc");
  REQUIRE(run({"gen", "--seed", "3", "--n", "8", "--width", "48", "--height", "48", "--ssc-points", "16", "--out",
               (dir / "scenes").string()})
              .code == 0);
  auto fit = [&](const std::string& name) {
    return run({"ssc", "fit", "--data", (dir / "scenes").string(), "--out", (dir / name).string(), "--epochs", "40"});
  };
  const Run a = fit("a.json");
  REQUIRE_MESSAGE(a.code == 0, a.err);
  REQUIRE(fit("b.json").code == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  const auto j = nlohmann::json::parse(a.out);
  const auto& rmse = j.at("val_rmse");
  CHECK(rmse.at("ensemble").get<double>() <= rmse.at("low_model").get<double>());
  CHECK(rmse.at("ensemble").get<double>() <= rmse.at("high_model").get<double>());

  const Run ev = run({"ssc", "eval", "--model", (dir / "a.json").string(), "--data", (dir / "scenes").string(), "--out",
                      (dir / "m.json").string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(nlohmann::json::parse(slurp(dir / "m.json")).at("metrics").contains("rmse"));
}
