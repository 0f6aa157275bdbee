#pragma once

#include <string>
#include <string_view>

#include "mtmask/raster.hpp"

namespace mtmask {

struct UtcTime {
  int year = 2000;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  double second = 0.0;

  /// Parses "YYYY-MM-DDTHH:MM[:SS[.fff]][Z]". Throws DataError.
  static UtcTime parse(std::string_view iso);
  std::string to_string() const;
  int day_of_year() const;
  double hour_of_day() const { return hour + minute / 60.0 + second / 3600.0; }
};

struct ObservationMeta {
  UtcTime time;
  double latitude = 0.0;   // degrees north
  double longitude = 0.0;  // degrees east
};

struct SolarPosition {
  double elevation = 0.0;  // degrees above the horizon
  double azimuth = 0.0;    // degrees clockwise from north, [0, 360)
};

/// Closed-form sun position without refraction, good to about 0.02 degrees
/// for present-day dates.
///
/// Julian centuries since J2000 give the sun's mean longitude and anomaly;
/// the equation of centre, nutation and aberration corrections yield the
/// apparent longitude and the declination, and the equation of time follows
/// from the same terms. True solar time is UTC minutes + EoT + 4*longitude;
/// the hour angle is tst/4 - 180 degrees. Elevation and azimuth follow from
/// the spherical triangle pole-zenith-sun.
///
/// Throws DataError for latitude outside [-90,90] or longitude outside [-180,180].
SolarPosition solar_position(const ObservationMeta& meta);

/// Cast terrain shadow by per-pixel ray marching toward the sun.
///
/// From each pixel centre the ray advances one pixel_size per step along the
/// sun azimuth (north = up = decreasing row). At distance d the DEM is
/// sampled bilinearly; the pixel is shadowed as soon as a sample rises above
/// z + d*tan(elevation) (grazing contact within 1e-6 m counts as blocked).
/// Marching stops at max_relief/tan(elevation) or when the ray leaves the
/// grid. With the sun at or below the horizon every pixel is shadowed.
MaskPlane terrain_shadow(const Dem& dem, const SolarPosition& sun);

}  // namespace mtmask
