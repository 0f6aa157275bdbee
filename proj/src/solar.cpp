#include "mtmask/solar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace mtmask {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kGrazeTolerance = 1e-6;

}  // namespace

UtcTime UtcTime::parse(std::string_view iso) {
  UtcTime t;
  std::string s(iso);
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d%n", &t.year, &t.month, &t.day, &t.hour, &t.minute, &consumed) != 5)
    throw DataError("bad timestamp '" + std::string(iso) + "'");
  if (static_cast<std::size_t>(consumed) < s.size()) {
    if (s[consumed] != ':') throw DataError("bad timestamp '" + std::string(iso) + "'");
    char* end = nullptr;
    t.second = std::strtod(s.c_str() + consumed + 1, &end);
    if (end != s.c_str() + s.size()) throw DataError("bad timestamp '" + std::string(iso) + "'");
  }
  namespace chr = std::chrono;
  const chr::year_month_day ymd{chr::year{t.year}, chr::month{static_cast<unsigned>(t.month)},
                                chr::day{static_cast<unsigned>(t.day)}};
  if (!ymd.ok() || t.hour < 0 || t.hour > 23 || t.minute < 0 || t.minute > 59 || t.second < 0.0 || t.second >= 61.0)
    throw DataError("timestamp out of range '" + std::string(iso) + "'");
  return t;
}

std::string UtcTime::to_string() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%06.3fZ", year, month, day, hour, minute, second);
  return buf;
}

int UtcTime::day_of_year() const {
  namespace chr = std::chrono;
  const chr::sys_days d{chr::year_month_day{chr::year{year}, chr::month{static_cast<unsigned>(month)},
                                            chr::day{static_cast<unsigned>(day)}}};
  const chr::sys_days jan1{chr::year_month_day{chr::year{year}, chr::January, chr::day{1}}};
  return static_cast<int>((d - jan1).count()) + 1;
}

SolarPosition solar_position(const ObservationMeta& meta) {
  if (!(meta.latitude >= -90.0 && meta.latitude <= 90.0)) throw DataError("latitude out of range [-90, 90]");
  if (!(meta.longitude >= -180.0 && meta.longitude <= 180.0)) throw DataError("longitude out of range [-180, 180]");

  const double hour = meta.time.hour_of_day();
  namespace chr = std::chrono;
  const chr::sys_days date{chr::year_month_day{chr::year{meta.time.year}, chr::month{static_cast<unsigned>(meta.time.month)},
                                               chr::day{static_cast<unsigned>(meta.time.day)}}};
  const chr::sys_days j2000{chr::year{2000} / chr::January / chr::day{1}};
  const double jd = 2451544.5 + static_cast<double>((date - j2000).count()) + hour / 24.0;
  const double T = (jd - 2451545.0) / 36525.0;  // Julian centuries since J2000

  const double L0 = std::fmod(280.46646 + T * (36000.76983 + T * 0.0003032), 360.0) * kDeg;
  const double M = (357.52911 + T * (35999.05029 - 0.0001537 * T)) * kDeg;
  const double e = 0.016708634 - T * (0.000042037 + 0.0000001267 * T);
  const double centre = std::sin(M) * (1.914602 - T * (0.004817 + 0.000014 * T)) + std::sin(2 * M) * (0.019993 - 0.000101 * T) +
                        std::sin(3 * M) * 0.000289;
  const double omega = (125.04 - 1934.136 * T) * kDeg;
  const double apparent_long = (L0 / kDeg + centre - 0.00569 - 0.00478 * std::sin(omega)) * kDeg;
  const double mean_obliquity = 23.0 + (26.0 + (21.448 - T * (46.815 + T * (0.00059 - T * 0.001813))) / 60.0) / 60.0;
  const double obliquity = (mean_obliquity + 0.00256 * std::cos(omega)) * kDeg;
  const double decl = std::asin(std::sin(obliquity) * std::sin(apparent_long));

  const double y = std::pow(std::tan(obliquity / 2.0), 2);
  const double eot_min = 4.0 / kDeg *
                         (y * std::sin(2 * L0) - 2 * e * std::sin(M) + 4 * e * y * std::sin(M) * std::cos(2 * L0) -
                          0.5 * y * y * std::sin(4 * L0) - 1.25 * e * e * std::sin(2 * M));

  const double true_solar_min = hour * 60.0 + eot_min + 4.0 * meta.longitude;
  const double hour_angle = (true_solar_min / 4.0 - 180.0) * kDeg;
  const double lat = meta.latitude * kDeg;

  const double cos_zenith =
      std::clamp(std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle), -1.0, 1.0);
  const double zenith = std::acos(cos_zenith);

  // Azimuth measured from south (westward positive), shifted to north-clockwise.
  const double az_south = std::atan2(std::sin(hour_angle), std::cos(hour_angle) * std::sin(lat) - std::tan(decl) * std::cos(lat));
  double az = az_south / kDeg + 180.0;
  az = std::fmod(az, 360.0);
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;

  return {90.0 - zenith / kDeg, az};
}

namespace {

// Bilinear sample at fractional (col, row). Caller guarantees the point lies
// inside [0, w-1] x [0, h-1].
inline double sample(const FloatPlane& z, double fx, double fy) {
  const int x0 = std::min(static_cast<int>(fx), z.width - 1);
  const int y0 = std::min(static_cast<int>(fy), z.height - 1);
  const int x1 = std::min(x0 + 1, z.width - 1);
  const int y1 = std::min(y0 + 1, z.height - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double top = z.at(x0, y0) * (1.0 - tx) + z.at(x1, y0) * tx;
  const double bottom = z.at(x0, y1) * (1.0 - tx) + z.at(x1, y1) * tx;
  return top * (1.0 - ty) + bottom * ty;
}

}  // namespace

MaskPlane terrain_shadow(const Dem& dem, const SolarPosition& sun) {
  dem.check();
  const FloatPlane& z = dem.elevation;
  MaskPlane shadow(z.width, z.height, 0);
  if (sun.elevation <= 0.0) {
    std::fill(shadow.values.begin(), shadow.values.end(), std::uint8_t{1});
    return shadow;
  }

  const auto [lo, hi] = std::minmax_element(z.values.begin(), z.values.end());
  const double relief = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (relief <= 0.0) return shadow;

  const double tan_el = std::tan(sun.elevation * kDeg);
  const double rise_per_step = tan_el * dem.pixel_size;
  const int max_steps = static_cast<int>(std::ceil(relief / rise_per_step));
  // Snap the rounding residue of axis-aligned azimuths (cos 90deg ~ 6e-17).
  auto snap = [](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; };
  const double dx = snap(std::sin(sun.azimuth * kDeg));
  const double dy = snap(-std::cos(sun.azimuth * kDeg));
  const double xmax = z.width - 1;
  const double ymax = z.height - 1;

  for (int y = 0; y < z.height; ++y) {
    for (int x = 0; x < z.width; ++x) {
      const double z0 = z.at(x, y);
      for (int step = 1; step <= max_steps; ++step) {
        const double fx = x + step * dx;
        const double fy = y + step * dy;
        if (fx < 0.0 || fy < 0.0 || fx > xmax || fy > ymax) break;
        if (sample(z, fx, fy) - z0 > step * rise_per_step - kGrazeTolerance) {
          shadow.at(x, y) = 1;
          break;
        }
      }
    }
  }
  return shadow;
}

}  // namespace mtmask
