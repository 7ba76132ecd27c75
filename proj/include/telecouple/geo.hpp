#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace telecouple {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kSecondsPerDay = 86400.0;

template <typename Scalar>
using LonLat = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
Scalar deg2rad(Scalar deg) {
  return deg * Scalar(std::numbers::pi) / Scalar(180);
}

template <typename Scalar>
Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / Scalar(std::numbers::pi);
}

/// Central angle between two lon/lat points, in radians (haversine form).
template <typename Scalar>
Scalar central_angle(const LonLat<Scalar>& a, const LonLat<Scalar>& b) {
  using std::asin;
  using std::cos;
  using std::min;
  using std::sin;
  using std::sqrt;
  const Scalar dlat = deg2rad(b.y() - a.y());
  const Scalar dlon = deg2rad(b.x() - a.x());
  const Scalar s1 = sin(dlat / Scalar(2));
  const Scalar s2 = sin(dlon / Scalar(2));
  const Scalar h = s1 * s1 + cos(deg2rad(a.y())) * cos(deg2rad(b.y())) * s2 * s2;
  return Scalar(2) * asin(min(Scalar(1), sqrt(h)));
}

/// Great-circle distance in meters on a sphere of radius 6,371 km.
template <typename Scalar>
Scalar haversine_m(const LonLat<Scalar>& a, const LonLat<Scalar>& b) {
  return Scalar(kEarthRadiusM) * central_angle(a, b);
}

/// Great-circle distance expressed in degrees of arc.
template <typename Scalar>
Scalar great_circle_deg(const LonLat<Scalar>& a, const LonLat<Scalar>& b) {
  return rad2deg(central_angle(a, b));
}

/// Length in meters of one degree of longitude at `lat`.
template <typename Scalar>
Scalar meters_per_degree_lon(Scalar lat) {
  return haversine_m(LonLat<Scalar>(Scalar(0), lat), LonLat<Scalar>(Scalar(1), lat));
}

/// One day of advection. Both components are divided by the local length of
/// a degree of longitude, so the northward step is scaled like the eastward one.
template <typename Scalar>
LonLat<Scalar> advance_position(const LonLat<Scalar>& p, const LonLat<Scalar>& wind) {
  const Scalar m = meters_per_degree_lon(p.y());
  return p + wind * (Scalar(kSecondsPerDay) / m);
}

}  // namespace telecouple
