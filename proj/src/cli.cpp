#include "mtmask/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "mtmask/baselines.hpp"
#include "mtmask/bench.hpp"
#include "mtmask/dataset.hpp"
#include "mtmask/error.hpp"
#include "mtmask/fusion.hpp"
#include "mtmask/metrics.hpp"
#include "mtmask/mtile.hpp"
#include "mtmask/net/checkpoint.hpp"
#include "mtmask/net/train.hpp"
#include "mtmask/scene.hpp"
#include "mtmask/ssc.hpp"

namespace mtmask::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kPredSuffix = ".pred.mtile";

// ---------------------------------------------------------------------------
// Settings registry: every option of a subcommand is registered here so that
// --config can fill the ones not given on the command line and --show-config
// can print the effective values.

class Settings {
public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON object of settings; command-line flags take precedence");
    app_->add_flag("--show-config", show_, "Print the effective settings as JSON and exit");
  }

  template <typename T>
  CLI::Option* add(const std::string& key, T& var, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + key, var, help)->capture_default_str();
    entries_.push_back(Entry{
        key, opt, [&var] { return ordered_json(var); },
        [&var, key](const ordered_json& j) {
          try {
            var = j.get<T>();
          } catch (const nlohmann::json::exception&) {
            throw UsageError("config: bad value for '" + key + "'");
          }
        }});
    return opt;
  }

  /// Applies --config to unset options. Returns true when --show-config was
  /// requested and the settings have been printed.
  bool resolve(std::ostream& out) {
    if (!config_path_.empty()) {
      const ordered_json cfg = read_json(config_path_);
      if (!cfg.is_object()) throw UsageError("config: expected a JSON object in " + config_path_);
      for (const auto& [key, value] : cfg.items()) {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
        if (it == entries_.end()) throw UsageError("config: unknown setting '" + key + "'");
        if (it->option->count() == 0) it->set(value);
      }
    }
    if (!show_) return false;
    ordered_json j = ordered_json::object();
    for (const auto& e : entries_) j[e.key] = e.get();
    out << j.dump(2) << '\n';
    return true;
  }

private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<ordered_json()> get;
    std::function<void(const ordered_json&)> set;
  };
  CLI::App* app_;
  std::string config_path_;
  bool show_ = false;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Shared helpers

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required setting --") + flag);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Runs body(i) for i in [0, n) on `jobs` threads and rethrows the first failure.
void for_each_index(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs < 1) throw UsageError("--jobs must be at least 1");
  if (jobs == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t w = 0; w < count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Masks for a scene: the labels of the scene directory, or the five planes
/// of `<id>.pred.mtile` under `masks_dir` when one is given.
MaskSet scene_masks(const SceneDir& data, const std::string& masks_dir, const std::string& id) {
  if (masks_dir.empty()) return load_masks(data.masks(id));
  return load_masks(fs::path(masks_dir) / (id + std::string(kPredSuffix)));
}

std::string dump_line(const ordered_json& j) { return j.dump() + "\n"; }

ordered_json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

std::vector<net::Sample> load_samples(const SceneDir& data) {
  std::vector<net::Sample> samples;
  samples.reserve(data.ids.size());
  for (const auto& id : data.ids) samples.push_back(net::make_sample(load_tile(data.tile(id)), load_masks(data.masks(id))));
  return samples;
}

/// Mean over heads of the pooled F1 of binarised predictions on `data`.
double pooled_mean_f1(const net::MultiTaskModel& model, std::span<const net::Sample> data) {
  const auto& heads = model.architecture().heads;
  std::vector<Confusion> pooled(heads.size());
  for (const auto& s : data) {
    const int H = s.input.shape[0];
    const int W = s.input.shape[1];
    const auto probs = model.forward(s.input);
    for (std::size_t m = 0; m < heads.size(); ++m) {
      MaskPlane pred(W, H), label(W, H);
      const auto target_channel = static_cast<std::size_t>(heads[m]);
      for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
        pred.values[p] = probs[p * heads.size() + m] > 0.5f ? 1 : 0;
        label.values[p] = s.targets[p * kMaskCount + target_channel] > 0.5f ? 1 : 0;
      }
      pooled[m] += confusion(pred, label, s.valid);
    }
  }
  double sum = 0.0;
  for (const auto& c : pooled) sum += pixel_metrics(c).f1.value_or(0.0);
  return sum / static_cast<double>(heads.size());
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  std::uint64_t seed = 0;
  int n = 4;
  std::string out;
  SceneConfig scene;
};

void add_gen(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("gen", "Generate synthetic scenes with labels, DEMs and SSC samples");
  auto opts = std::make_shared<GenOptions>();
  auto settings = std::make_shared<Settings>(app);
  SceneConfig& c = opts->scene;
  settings->add("seed", opts->seed, "Root seed; scene i uses an independent stream derived from it");
  settings->add("n", opts->n, "Number of scenes");
  settings->add("out", opts->out, "Output directory");
  settings->add("width", c.width, "Scene width in pixels");
  settings->add("height", c.height, "Scene height in pixels");
  settings->add("pixel-size", c.pixel_size, "Ground sample distance in metres");
  settings->add("water", c.water_fraction, "Water fraction of valid pixels");
  settings->add("cloud", c.cloud_fraction, "Cloud fraction of valid pixels");
  settings->add("cloud-shadow", c.cloud_shadow_fraction, "Cloud shadow fraction of valid pixels");
  settings->add("snow-ice", c.snow_ice_fraction, "Snow/ice fraction of valid pixels");
  settings->add("noise", c.noise, "Per-pixel reflectance noise (std dev)");
  settings->add("border-invalid", c.border_invalid, "Fraction of leftmost columns without data");
  settings->add("blob-scale", c.blob_scale, "Class blob lattice spacing in pixels");
  settings->add("terrain-scale", c.terrain_scale, "DEM lattice spacing in pixels");
  settings->add("relief", c.relief, "DEM amplitude in metres");
  settings->add("spectral-shift", c.spectral_shift, "Distribution shift for transfer experiments");
  settings->add("ssc-points", c.ssc_points, "SSC sample sites per scene");

  runners.push_back([app, opts, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(opts->out, "out");
    if (opts->n < 1) throw UsageError("--n must be at least 1");
    const fs::path dir(opts->out);
    fs::create_directories(dir);

    const Rng root(opts->seed);
    std::vector<std::string> ids;
    std::vector<SscRecord> records;
    for (int i = 0; i < opts->n; ++i) {
      SceneConfig cfg = opts->scene;
      cfg.seed = root.at(static_cast<std::uint64_t>(i) + 1);
      const Scene scene = generate_scene(cfg);
      char id[32];
      std::snprintf(id, sizeof id, "scene_%03d", i);
      ids.emplace_back(id);
      save_scene(scene, id, dir);
      for (const auto& p : scene.ssc) records.push_back(SscRecord{p.x, p.y, p.ssc, id, {}});
    }
    write_ssc_csv(records, dir / "ssc_records.csv");

    const SceneConfig& c = opts->scene;
    ordered_json manifest;
    manifest["format"] = "mtmask-scenes";
    manifest["version"] = 1;
    manifest["seed"] = opts->seed;
    manifest["generator"] = {{"width", c.width},
                             {"height", c.height},
                             {"pixel_size", c.pixel_size},
                             {"water", c.water_fraction},
                             {"cloud", c.cloud_fraction},
                             {"cloud_shadow", c.cloud_shadow_fraction},
                             {"snow_ice", c.snow_ice_fraction},
                             {"noise", c.noise},
                             {"border_invalid", c.border_invalid},
                             {"blob_scale", c.blob_scale},
                             {"terrain_scale", c.terrain_scale},
                             {"relief", c.relief},
                             {"spectral_shift", c.spectral_shift},
                             {"ssc_points", c.ssc_points}};
    manifest["scenes"] = ids;
    write_json(dir / "manifest.json", manifest);
    out << dump_line({{"scenes", ids.size()}, {"ssc_records", records.size()}, {"out", dir.string()}});
    return 0;
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data, out, loss_curve;
  int epochs = 100;
  int batch_size = 1;
  double lr = 1e-2;
  double momentum = 0.9;
  std::string optimizer = "sgd";
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  std::string single_task;
  std::string init;
  std::string init_mode = "backbone";
  std::vector<int> widths{16, 32, 32};
  bool attention = true;
  bool skip = true;
  double stop_f1 = 0.0;
  int eval_every = 10;
};

void add_train(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("train", "Train a multi-task (or single-task) segmentation model");
  auto o = std::make_shared<TrainOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("data", o->data, "Scene directory used for training");
  settings->add("out", o->out, "Checkpoint path");
  settings->add("loss-curve", o->loss_curve, "CSV of per-epoch losses (default: <out> with .loss.csv)");
  settings->add("epochs", o->epochs, "Maximum number of epochs");
  settings->add("batch-size", o->batch_size, "Scenes per update");
  settings->add("lr", o->lr, "Learning rate");
  settings->add("momentum", o->momentum, "Momentum of sgd");
  settings->add("optimizer", o->optimizer, "sgd or adam");
  settings->add("seed", o->seed, "Seed of weight initialisation and batch order");
  settings->add("grad-clip", o->grad_clip, "Maximum gradient L2 norm (0 disables)");
  settings->add("single-task", o->single_task, "Train one head only: water, cloud, cloud_shadow, snow_ice or terrain_shadow");
  settings->add("init", o->init, "Checkpoint to initialise from");
  settings->add("init-mode", o->init_mode, "backbone (re-initialise heads) or full");
  settings->add("widths", o->widths, "Backbone channel widths")->delimiter(',');
  settings->add("attention", o->attention, "Attention block on the coarsest map");
  settings->add("skip", o->skip, "Concatenate full-resolution features before the heads");
  settings->add("stop-f1", o->stop_f1, "Stop once the mean pooled training F1 reaches this (0 disables)");
  settings->add("eval-every", o->eval_every, "Epoch interval of the --stop-f1 check");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->data, "data");
    require(o->out, "out");
    if (o->eval_every < 1) throw UsageError("--eval-every must be at least 1");

    net::Architecture arch;
    arch.widths = o->widths;
    arch.attention = o->attention;
    arch.skip = o->skip;
    if (!o->single_task.empty()) {
      if (!parse_mask_name(o->single_task)) throw UsageError("unknown mask '" + o->single_task + "'");
      arch = net::single_task_variant(arch, o->single_task);
    }
    arch.check();
    net::MultiTaskModel model(arch, o->seed);
    if (!o->init.empty()) {
      net::InitMode mode;
      if (o->init_mode == "backbone") mode = net::InitMode::backbone_only;
      else if (o->init_mode == "full") mode = net::InitMode::full;
      else throw UsageError("--init-mode must be backbone or full");
      init_from_checkpoint(model, net::load_checkpoint(o->init), mode);
    }

    const auto samples = load_samples(SceneDir::open(o->data));
    net::TrainConfig cfg;
    cfg.epochs = o->epochs;
    cfg.batch_size = o->batch_size;
    cfg.learning_rate = o->lr;
    cfg.momentum = o->momentum;
    try {
      cfg.optimizer = net::parse_optimizer(o->optimizer);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    cfg.seed = o->seed;
    cfg.grad_clip = o->grad_clip;
    try {
      cfg.check();
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    std::optional<double> reached_f1;
    if (o->stop_f1 > 0.0) {
      cfg.on_epoch = [&](int epoch, double, const net::MultiTaskModel& m) {
        if (epoch % o->eval_every != 0) return false;
        const double f1 = pooled_mean_f1(m, samples);
        if (f1 >= o->stop_f1) reached_f1 = f1;
        return reached_f1.has_value();
      };
    }
    const net::TrainResult result = net::train(std::move(model), samples, cfg);

    const fs::path ckpt_path(o->out);
    ensure_parent(ckpt_path);
    net::save_checkpoint(net::make_checkpoint(result.model, result.epochs_run), ckpt_path);
    fs::path curve_path = o->loss_curve.empty() ? fs::path(ckpt_path).replace_extension(".loss.csv") : fs::path(o->loss_curve);
    std::string csv = "epoch,loss\n";
    char row[64];
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
      std::snprintf(row, sizeof row, "%zu,%.17g\n", e + 1, result.loss_curve[e]);
      csv += row;
    }
    write_text(curve_path, csv);

    ordered_json summary;
    summary["checkpoint"] = ckpt_path.string();
    summary["epochs_run"] = result.epochs_run;
    summary["final_loss"] = result.loss_curve.empty() ? ordered_json(nullptr) : ordered_json(result.loss_curve.back());
    std::vector<std::string> heads;
    for (auto k : result.model.architecture().heads) heads.emplace_back(mask_name(k));
    summary["heads"] = heads;
    if (reached_f1) summary["stop_f1_reached"] = *reached_f1;
    out << dump_line(summary);
    return 0;
  });
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string checkpoint, data, out;
  int jobs = 1;
  bool probabilities = false;
};

void add_predict(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("predict", "Predict masks for every scene with a trained checkpoint");
  auto o = std::make_shared<PredictOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("checkpoint", o->checkpoint, "Model checkpoint");
  settings->add("data", o->data, "Scene directory");
  settings->add("out", o->out, "Output directory for <id>.pred.mtile");
  settings->add("jobs", o->jobs, "Scenes processed in parallel");
  settings->add("probabilities", o->probabilities, "Also write <id>.prob.mtile with the raw head outputs");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->checkpoint, "checkpoint");
    require(o->data, "data");
    require(o->out, "out");
    const auto model = net::model_from_checkpoint(net::load_checkpoint(o->checkpoint));
    const SceneDir data = SceneDir::open(o->data);
    const fs::path dir(o->out);
    fs::create_directories(dir);

    for_each_index(data.ids.size(), o->jobs, [&](std::size_t i) {
      const std::string& id = data.ids[i];
      const TileStack tile = load_tile(data.tile(id));
      const net::Prediction pred = net::multitask_forward(model, tile);
      const MaskSet masks = net::binarize(pred, tile.width, tile.height);
      PlaneStack bin{tile.width, tile.height, tile.pixel_size, {}, {}};
      PlaneStack prob = bin;
      for (std::size_t k = 0; k < pred.kinds.size(); ++k) {
        bin.names.emplace_back(mask_name(pred.kinds[k]));
        bin.planes.push_back(to_float(masks[pred.kinds[k]]));
        prob.names.emplace_back(mask_name(pred.kinds[k]));
        prob.planes.push_back(pred.probs[k]);
      }
      save_planes(dir / (id + std::string(kPredSuffix)), bin);
      if (o->probabilities) save_planes(dir / (id + ".prob.mtile"), prob);
    });
    out << dump_line({{"scenes", data.ids.size()}, {"out", dir.string()}});
    return 0;
  });
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineOptions {
  std::string method = "mndwi";
  std::string data, out;
  std::string threshold = "select";
  std::string select_data;
  int bins = 256;
};

double parse_double(const std::string& s, const char* flag) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw UsageError(std::string("--") + flag + " expects a number or 'select', got '" + s + "'");
  return v;
}

void add_baseline(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("baseline", "Index-threshold water masks (MNDWI with a fixed or selected threshold, or Otsu)");
  auto o = std::make_shared<BaselineOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("method", o->method, "mndwi or otsu");
  settings->add("data", o->data, "Scene directory to mask");
  settings->add("out", o->out, "Output directory for <id>.pred.mtile (plane 'water')");
  settings->add("threshold", o->threshold, "MNDWI threshold, or 'select' to sweep it on --select-data");
  settings->add("select-data", o->select_data, "Labelled scenes for the threshold sweep");
  settings->add("bins", o->bins, "Histogram bins of the Otsu method");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->data, "data");
    require(o->out, "out");
    if (o->method != "mndwi" && o->method != "otsu") throw UsageError("--method must be mndwi or otsu");
    const SceneDir data = SceneDir::open(o->data);
    const fs::path dir(o->out);
    fs::create_directories(dir);

    std::optional<double> fixed;
    if (o->method == "mndwi") {
      if (o->threshold != "select") {
        fixed = parse_double(o->threshold, "threshold");
      } else {
        if (o->select_data.empty()) throw UsageError("threshold selection needs --select-data");
        const SceneDir sel = SceneDir::open(o->select_data);
        std::vector<ScoreMap> scores;
        std::vector<MaskPlane> labels;
        for (const auto& id : sel.ids) {
          scores.push_back(mndwi(load_tile(sel.tile(id))));
          labels.push_back(load_mask(sel.masks(id), "water"));
        }
        fixed = select_threshold(scores, labels).t;
      }
    }

    ordered_json per_scene = ordered_json::array();
    for (const auto& id : data.ids) {
      const TileStack tile = load_tile(data.tile(id));
      const ScoreMap score = mndwi(tile);
      const Threshold t = fixed ? Threshold{*fixed} : otsu_threshold(score, o->bins);
      save_mask(apply_threshold(score, t), "water", dir / (id + std::string(kPredSuffix)), tile.pixel_size);
      per_scene.push_back({{"scene", id}, {"threshold", t.t}});
    }
    ordered_json report;
    report["method"] = o->method;
    if (fixed) report["threshold"] = *fixed;
    report["scenes"] = per_scene;
    write_json(dir / "baseline.json", report);
    out << dump_line({{"method", o->method}, {"scenes", data.ids.size()}, {"threshold", fixed ? ordered_json(*fixed) : ordered_json("per-scene")}});
    return 0;
  });
}

// ---------------------------------------------------------------------------
// fuse

struct FuseOptions {
  std::string data, masks, out;
};

void add_fuse(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("fuse", "Combine the five masks into the good-quality water mask");
  auto o = std::make_shared<FuseOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("data", o->data, "Scene directory (validity and, by default, label masks)");
  settings->add("masks", o->masks, "Directory of <id>.pred.mtile with all five planes (default: labels)");
  settings->add("out", o->out, "Output directory for <id>.good.mtile");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->data, "data");
    require(o->out, "out");
    const SceneDir data = SceneDir::open(o->data);
    const fs::path dir(o->out);
    fs::create_directories(dir);
    ordered_json scenes = ordered_json::array();
    for (const auto& id : data.ids) {
      const TileStack tile = load_tile(data.tile(id));
      const MaskPlane good = fuse_good_water(scene_masks(data, o->masks, id), tile.valid);
      save_mask(good, "good_water", dir / (id + ".good.mtile"), tile.pixel_size);
      const auto n = std::count(good.values.begin(), good.values.end(), std::uint8_t{1});
      scenes.push_back({{"scene", id}, {"good_pixels", n}});
    }
    out << dump_line({{"scenes", scenes}});
    return 0;
  });
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string pred, labels, out;
  int jobs = 1;
};

void add_eval(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("eval", "Pixel metrics of predicted masks against labels");
  auto o = std::make_shared<EvalOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("pred", o->pred, "Directory of <id>.pred.mtile; every mask plane present is scored");
  settings->add("labels", o->labels, "Scene directory with labels and validity");
  settings->add("out", o->out, "Report path prefix; writes <out>.json and <out>.csv");
  settings->add("jobs", o->jobs, "Scenes processed in parallel");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->pred, "pred");
    require(o->labels, "labels");
    const SceneDir data = SceneDir::open(o->labels);
    const fs::path pred_dir(o->pred);

    MaskEvaluation ev;
    ev.scene_ids = data.ids;
    for (const auto& name : load_planes(pred_dir / (data.ids.front() + std::string(kPredSuffix))).names)
      if (parse_mask_name(name)) ev.mask_names.push_back(name);
    if (ev.mask_names.empty()) throw DataError("prediction files hold no mask plane");
    ev.per_scene.resize(data.ids.size());

    for_each_index(data.ids.size(), o->jobs, [&](std::size_t i) {
      const std::string& id = data.ids[i];
      const PlaneStack pred = load_planes(pred_dir / (id + std::string(kPredSuffix)));
      const MaskSet labels = load_masks(data.masks(id));
      const MaskPlane valid = load_tile(data.tile(id)).valid;
      std::vector<Confusion> row;
      for (const auto& name : ev.mask_names) {
        const FloatPlane* plane = pred.find(name);
        if (!plane) throw DataError("scene " + id + ": prediction lacks plane '" + name + "'");
        row.push_back(confusion(to_mask(*plane, name), labels[*parse_mask_name(name)], valid));
      }
      ev.per_scene[i] = std::move(row);
    });

    const nlohmann::json report = ev.report();
    if (!o->out.empty()) {
      const fs::path prefix(o->out);
      ensure_parent(prefix);
      write_text(prefix.string() + ".json", report.dump(2) + "\n");
      write_text(prefix.string() + ".csv", ev.csv());
    }
    ordered_json summary = ordered_json::object();
    const auto pooled = ev.pooled();
    for (std::size_t m = 0; m < ev.mask_names.size(); ++m) {
      const auto f1 = pixel_metrics(pooled[m]).f1;
      summary[ev.mask_names[m]] = f1 ? ordered_json(*f1) : ordered_json(nullptr);
    }
    out << dump_line({{"pooled_f1", summary}});
    return 0;
  });
}

// ---------------------------------------------------------------------------
// ssc

struct SscData {
  std::vector<SscRecord> records;
  std::vector<std::string> scene_of;  // parallel to records
  std::size_t skipped = 0;            // sites with no good pixel in the window
};

/// Records of `ssc_records.csv` with features extracted from the fused masks.
SscData load_ssc_data(const SceneDir& data, const std::string& masks_dir, const std::vector<std::string>& scene_filter) {
  const auto all = read_ssc_csv(data.ssc_records());
  SscData out;
  std::map<std::string, std::pair<TileStack, MaskPlane>> cache;
  for (const auto& rec : all) {
    if (!scene_filter.empty() && std::find(scene_filter.begin(), scene_filter.end(), rec.scene_id) == scene_filter.end()) continue;
    auto it = cache.find(rec.scene_id);
    if (it == cache.end()) {
      TileStack tile = load_tile(data.tile(rec.scene_id));
      MaskPlane good = fuse_good_water(scene_masks(data, masks_dir, rec.scene_id), tile.valid);
      it = cache.emplace(rec.scene_id, std::make_pair(std::move(tile), std::move(good))).first;
    }
    SscRecord r = rec;
    try {
      r.features = extract_features(it->second.first, it->second.second, r.x, r.y);
    } catch (const DataError&) {
      ++out.skipped;
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

struct SscFitOptions {
  std::string data, masks, out;
  double val_fraction = 0.25;
  SscFitConfig fit;
};

struct SscApplyOptions {
  std::string model, data, masks, out;
};

ordered_json regression_json(const RegressionMetrics& m) {
  return {{"count", m.count},       {"rmse", m.rmse},       {"mae", m.mae},         {"bias", m.bias},
          {"abs_median", m.abs_median}, {"abs_min", m.abs_min}, {"abs_max", m.abs_max}, {"abs_std", m.abs_std},
          {"abs_p75", m.abs_p75},   {"abs_p90", m.abs_p90}, {"abs_p95", m.abs_p95}};
}

void add_ssc(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* ssc = root.add_subcommand("ssc", "Sediment concentration ensemble");
  ssc->require_subcommand(1);

  {
    auto* app = ssc->add_subcommand("fit", "Fit the two range models and the blending thresholds");
    auto o = std::make_shared<SscFitOptions>();
    auto settings = std::make_shared<Settings>(app);
    settings->add("data", o->data, "Scene directory with ssc_records.csv");
    settings->add("masks", o->masks, "Directory of predicted masks (default: labels)");
    settings->add("out", o->out, "Ensemble file");
    settings->add("val-fraction", o->val_fraction, "Share of scenes (last in order) held out for threshold selection");
    settings->add("low-max", o->fit.low_max, "Largest SSC seen by the low-range model, mg/L");
    settings->add("high-min", o->fit.high_min, "Smallest SSC seen by the high-range model, mg/L");
    settings->add("hidden", o->fit.hidden, "Hidden layer widths")->delimiter(',');
    settings->add("epochs", o->fit.epochs, "Training epochs per model");
    settings->add("batch-size", o->fit.batch_size, "Mini-batch size");
    settings->add("lr", o->fit.learning_rate, "Adam learning rate");
    settings->add("seed", o->fit.seed, "Seed of both models");
    settings->add("grid", o->fit.grid, "Uniform threshold candidates per axis");

    runners.push_back([app, o, settings](std::ostream& out) {
      if (!app->parsed()) return -1;
      if (settings->resolve(out)) return 0;
      require(o->data, "data");
      require(o->out, "out");
      if (!(o->val_fraction > 0.0 && o->val_fraction < 1.0)) throw UsageError("--val-fraction must lie in (0, 1)");
      const SceneDir data = SceneDir::open(o->data);
      const std::size_t n = data.ids.size();
      if (n < 2) throw DataError("ssc fit needs at least two scenes");
      const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(o->val_fraction * n)), 1, n - 1);
      std::vector<std::string> train_ids(data.ids.begin(), data.ids.end() - static_cast<std::ptrdiff_t>(n_val));
      const std::vector<std::string> val_ids(data.ids.end() - static_cast<std::ptrdiff_t>(n_val), data.ids.end());

      std::size_t cloudy = 0;
      std::erase_if(train_ids, [&](const std::string& id) {
        const bool keep = cloud_cover_filter(scene_masks(data, o->masks, id), load_tile(data.tile(id)).valid);
        cloudy += keep ? 0 : 1;
        return !keep;
      });
      if (train_ids.empty()) throw DataError("every training scene exceeds the cloud cover limit");
      const SscData train = load_ssc_data(data, o->masks, train_ids);
      const SscData val = load_ssc_data(data, o->masks, val_ids);
      const SscEnsemble ens = fit_ensemble(train.records, val.records, o->fit);
      const fs::path path(o->out);
      ensure_parent(path);
      save_ensemble(ens, path);

      std::vector<double> o1, o2, y;
      for (const auto& r : val.records) {
        const auto [a, b] = ens.outputs(r.features);
        o1.push_back(a);
        o2.push_back(b);
        y.push_back(r.ssc);
      }
      ordered_json summary;
      summary["model"] = path.string();
      summary["t1"] = threshold_json(ens.t1);
      summary["t2"] = threshold_json(ens.t2);
      summary["train_records"] = train.records.size();
      summary["val_records"] = val.records.size();
      summary["skipped_records"] = train.skipped + val.skipped;
      summary["cloudy_scenes_excluded"] = cloudy;
      summary["val_rmse"] = {{"ensemble", blend_rmse(o1, o2, y, ens.t1, ens.t2)},
                             {"low_model", blend_rmse(o1, o2, y, kInf, kInf)},
                             {"high_model", blend_rmse(o1, o2, y, -kInf, -kInf)}};
      out << dump_line(summary);
      return 0;
    });
  }

  auto add_apply = [&](const char* name, const char* help, bool evaluate) {
    auto* app = ssc->add_subcommand(name, help);
    auto o = std::make_shared<SscApplyOptions>();
    auto settings = std::make_shared<Settings>(app);
    settings->add("model", o->model, "Ensemble file from ssc fit");
    settings->add("data", o->data, "Scene directory with ssc_records.csv");
    settings->add("masks", o->masks, "Directory of predicted masks (default: labels)");
    settings->add("out", o->out, evaluate ? "Metrics JSON path" : "Predictions CSV path");

    runners.push_back([app, o, settings, evaluate](std::ostream& out) {
      if (!app->parsed()) return -1;
      if (settings->resolve(out)) return 0;
      require(o->model, "model");
      require(o->data, "data");
      const SscEnsemble ens = load_ensemble(o->model);
      const SscData d = load_ssc_data(SceneDir::open(o->data), o->masks, {});
      std::vector<double> y, y_hat;
      for (const auto& r : d.records) {
        y.push_back(r.ssc);
        y_hat.push_back(ssc_predict(ens, r.features));
      }
      if (evaluate) {
        ordered_json report;
        report["records"] = d.records.size();
        report["skipped_records"] = d.skipped;
        report["metrics"] = regression_json(regression_metrics(y, y_hat));
        if (!o->out.empty()) {
          ensure_parent(o->out);
          write_json(o->out, report);
        }
        out << dump_line(report);
      } else {
        require(o->out, "out");
        std::string csv = "x,y,scene_id,ssc_pred_mg_per_l\n";
        char row[96];
        for (std::size_t i = 0; i < d.records.size(); ++i) {
          std::snprintf(row, sizeof row, "%d,%d,", d.records[i].x, d.records[i].y);
          csv += row;
          csv += d.records[i].scene_id;
          std::snprintf(row, sizeof row, ",%.17g\n", y_hat[i]);
          csv += row;
        }
        ensure_parent(o->out);
        write_text(o->out, csv);
        out << dump_line({{"predictions", d.records.size()}, {"skipped_records", d.skipped}});
      }
      return 0;
    });
  };
  add_apply("predict", "Predict SSC at every record site", false);
  add_apply("eval", "Regression metrics of the ensemble against the recorded SSC", true);
}

// ---------------------------------------------------------------------------
// bench

struct BenchCliOptions {
  std::string scenes, checkpoint, out;
  std::string variant = "both";
  int parallel = 1;
  int repeats = 1;
  bool warmup = true;
};

void add_bench(CLI::App& root, std::vector<std::function<int(std::ostream&)>>& runners) {
  auto* app = root.add_subcommand("bench", "Time the standard and multi-task mask pipelines stage by stage");
  auto o = std::make_shared<BenchCliOptions>();
  auto settings = std::make_shared<Settings>(app);
  settings->add("scenes", o->scenes, "Scene directory (tiles, DEMs, metadata, ssc_records.csv sites)");
  settings->add("variant", o->variant, "standard, multitask or both");
  settings->add("checkpoint", o->checkpoint, "Model checkpoint for the multitask variant");
  settings->add("parallel", o->parallel, "Worker threads; more than 1 marks the report non-comparable");
  settings->add("repeats", o->repeats, "Measured passes; the fastest is reported");
  settings->add("warmup", o->warmup, "Run an untimed warm-up pass first");
  settings->add("out", o->out, "Report path prefix; writes <out>.json and <out>.csv");

  runners.push_back([app, o, settings](std::ostream& out) {
    if (!app->parsed()) return -1;
    if (settings->resolve(out)) return 0;
    require(o->scenes, "scenes");
    std::vector<bench::Variant> variants;
    if (o->variant == "both") variants = {bench::Variant::standard, bench::Variant::multitask};
    else variants = {bench::parse_variant(o->variant)};
    const bool needs_model = std::find(variants.begin(), variants.end(), bench::Variant::multitask) != variants.end();
    if (needs_model && o->checkpoint.empty()) throw UsageError("the multitask variant needs --checkpoint");

    const SceneDir data = SceneDir::open(o->scenes);
    std::map<std::string, std::vector<std::pair<int, int>>> sites;
    if (fs::exists(data.ssc_records()))
      for (const auto& r : read_ssc_csv(data.ssc_records())) sites[r.scene_id].emplace_back(r.x, r.y);
    std::vector<bench::BenchScene> scenes;
    for (const auto& id : data.ids)
      scenes.push_back({id, load_tile(data.tile(id)), load_dem(data.dem(id)), meta_from_json(read_json(data.meta(id))), sites[id]});

    std::optional<net::MultiTaskModel> model;
    if (needs_model) model = net::model_from_checkpoint(net::load_checkpoint(o->checkpoint));
    bench::BenchOptions opts;
    opts.threads = o->parallel;
    opts.repeats = o->repeats;
    opts.warmup = o->warmup;

    std::vector<bench::BenchReport> reports;
    for (auto v : variants) reports.push_back(bench::run_pipeline(v, scenes, model ? &*model : nullptr, opts));

    ordered_json j;
    j["reports"] = ordered_json::array();
    for (const auto& r : reports) j["reports"].push_back(r.to_json());
    if (reports.size() == 2) {
      const auto s = bench::speedup(reports[0], reports[1]);
      j["speedup"] = {{"ratio", s.ratio}, {"improvement_percent", s.improvement_percent}};
    }
    if (!o->out.empty()) {
      const fs::path prefix(o->out);
      ensure_parent(prefix);
      write_text(prefix.string() + ".json", j.dump(2) + "\n");
      write_text(prefix.string() + ".csv", bench::reports_csv(reports));
    }
    out << dump_line(j);
    return 0;
  });
}

// ---------------------------------------------------------------------------

void print_error(std::ostream& err, std::string_view kind, int code, std::string_view message) {
  ordered_json j;
  j["error"] = kind;
  j["exit"] = code;
  j["message"] = message;
  err << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

const char* kind_of(int code) {
  switch (code) {
    case 2: return "usage";
    case 4: return "numeric";
    default: return "data";
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task cloud, shadow, snow and water masking toolkit", "mtmask"};
  app.set_help_flag("--help", "Print this help and exit");
  app.require_subcommand(1);

  std::vector<std::function<int(std::ostream&)>> runners;
  add_gen(app, runners);
  add_train(app, runners);
  add_predict(app, runners);
  add_baseline(app, runners);
  add_fuse(app, runners);
  add_eval(app, runners);
  add_ssc(app, runners);
  add_bench(app, runners);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", 2, e.what());
    return 2;
  }

  try {
    for (auto& run : runners) {
      const int code = run(out);
      if (code >= 0) return code;
    }
    throw UsageError("no subcommand given");
  } catch (const Error& e) {
    print_error(err, kind_of(e.exit_code()), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    print_error(err, "data", 3, e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    print_error(err, "data", 3, e.what());
    return 3;
  } catch (const std::bad_alloc&) {
    print_error(err, "data", 3, "out of memory");
    return 3;
  }
}

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace mtmask::cli
