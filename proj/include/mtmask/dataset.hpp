#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtmask/mtile.hpp"
#include "mtmask/scene.hpp"

namespace mtmask {

/// On-disk layout of a generated scene directory:
///   manifest.json                  scene ids in order plus the generator settings
///   <id>.tile.mtile                bands and validity
///   <id>.masks.mtile               the five label planes
///   <id>.dem.mtile                 elevation
///   <id>.meta.json                 timestamp, location and sun position
///   ssc_records.csv                x,y,ssc_mg_per_l,scene_id
struct SceneDir {
  std::filesystem::path root;
  std::vector<std::string> ids;

  /// Reads manifest.json, or lists *.tile.mtile in name order without one.
  /// Throws DataError if the directory holds no scene.
  static SceneDir open(const std::filesystem::path& root);

  std::filesystem::path tile(const std::string& id) const { return root / (id + ".tile.mtile"); }
  std::filesystem::path masks(const std::string& id) const { return root / (id + ".masks.mtile"); }
  std::filesystem::path dem(const std::string& id) const { return root / (id + ".dem.mtile"); }
  std::filesystem::path meta(const std::string& id) const { return root / (id + ".meta.json"); }
  std::filesystem::path ssc_records() const { return root / "ssc_records.csv"; }
};

ordered_json meta_to_json(const ObservationMeta& meta, const SolarPosition& sun);
ObservationMeta meta_from_json(const ordered_json& j);

ordered_json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const ordered_json& j);

/// Writes one scene in the layout above (everything but the manifest and SSC CSV).
void save_scene(const Scene& scene, const std::string& id, const std::filesystem::path& root);

}  // namespace mtmask
