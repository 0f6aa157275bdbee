#include "mtmask/dataset.hpp"

#include <algorithm>
#include <fstream>

namespace mtmask {

namespace fs = std::filesystem;

SceneDir SceneDir::open(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  SceneDir d{root, {}};
  const fs::path manifest = root / "manifest.json";
  if (fs::exists(manifest)) {
    const ordered_json j = read_json(manifest);
    try {
      d.ids = j.at("scenes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError("manifest without a 'scenes' list: " + manifest.string());
    }
  } else {
    constexpr std::string_view suffix = ".tile.mtile";
    for (const auto& e : fs::directory_iterator(root)) {
      const std::string name = e.path().filename().string();
      if (name.size() > suffix.size() && name.ends_with(suffix)) d.ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(d.ids.begin(), d.ids.end());
  }
  if (d.ids.empty()) throw DataError("no scenes in " + root.string());
  return d;
}

ordered_json meta_to_json(const ObservationMeta& meta, const SolarPosition& sun) {
  ordered_json j;
  j["time"] = meta.time.to_string();
  j["latitude"] = meta.latitude;
  j["longitude"] = meta.longitude;
  j["sun"] = {{"elevation", sun.elevation}, {"azimuth", sun.azimuth}};
  return j;
}

ObservationMeta meta_from_json(const ordered_json& j) {
  try {
    ObservationMeta m;
    m.time = UtcTime::parse(j.at("time").get<std::string>());
    m.latitude = j.at("latitude").get<double>();
    m.longitude = j.at("longitude").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scene metadata: ") + e.what());
  }
}

ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_scene(const Scene& scene, const std::string& id, const fs::path& root) {
  const SceneDir d{root, {}};
  save_tile(scene.tile, d.tile(id));
  save_masks(scene.masks, d.masks(id), scene.tile.pixel_size);
  save_dem(scene.dem, d.dem(id));
  write_json(d.meta(id), meta_to_json(scene.meta, scene.sun));
}

}  // namespace mtmask
