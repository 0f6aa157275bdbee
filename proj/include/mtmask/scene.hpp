#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mtmask/raster.hpp"
#include "mtmask/solar.hpp"

namespace mtmask {

/// Knobs of the synthetic scene generator. Fractions are over valid pixels.
struct SceneConfig {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  double pixel_size = 30.0;

  double water_fraction = 0.20;
  double cloud_fraction = 0.10;
  double cloud_shadow_fraction = 0.06;
  double snow_ice_fraction = 0.05;

  double noise = 0.005;          // per-pixel reflectance noise (std dev)
  double border_invalid = 0.05;  // fraction of leftmost columns without data
  double blob_scale = 12.0;      // lattice spacing of class blobs, pixels
  double terrain_scale = 16.0;   // lattice spacing of the DEM, pixels
  double relief = 450.0;         // DEM amplitude, metres
  /// Shifts every class prior and the water turbidity; used to create a
  /// second "sensor" distribution for transfer experiments. 0 = reference.
  double spectral_shift = 0.0;
  int ssc_points = 12;
  std::optional<ObservationMeta> meta;  // derived from the seed when absent

  /// Throws DataError for infeasible fractions or sizes.
  void check() const;
};

/// In-situ style sample: SSC at a pixel of a scene.
struct SscPoint {
  int x = 0;
  int y = 0;
  double ssc = 0.0;  // mg/L
};

struct Scene {
  TileStack tile;
  MaskSet masks;
  Dem dem;
  ObservationMeta meta;
  SolarPosition sun;
  std::vector<SscPoint> ssc;
};

/// Ground-truth sediment concentration from the mean red and NIR reflectance of
/// good water pixels in the 300 m window:
///   ssc = exp(1 + 30 (red - 0.03) + 20 (nir - 0.01)) * exp(0.1 z),  z ~ N(0,1).
double ssc_truth(double mean_red, double mean_nir, double z);

/// Deterministic synthetic scene.
///
/// Classes come from value-noise blobs, assigned in priority order cloud,
/// snow/ice, cloud shadow, water; each takes the highest-noise unassigned
/// valid pixels up to its fraction. Cloud shadow reuses the cloud field
/// displaced away from the sun. The terrain shadow plane is
/// terrain_shadow(dem, solar_position(meta)) and darkens every surface.
Scene generate_scene(const SceneConfig& config);

}  // namespace mtmask
