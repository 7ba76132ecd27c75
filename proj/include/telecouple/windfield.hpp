#pragma once

#include "telecouple/ingest.hpp"
#include "telecouple/types.hpp"

#include <array>
#include <map>
#include <vector>

namespace telecouple {

/// Regular lon/lat lattice. Node (row, col) sits at
/// (lon_min + col*spacing, lat_min + row*spacing).
struct GridSpec {
  double lon_min = 0.0;
  double lat_min = 0.0;
  double lon_max = 0.0;
  double lat_max = 0.0;
  int res = 64;
  double spacing = 0.0;
  int n_lon = 0;
  int n_lat = 0;

  double node_lon(int col) const { return lon_min + col * spacing; }
  double node_lat(int row) const { return lat_min + row * spacing; }
  std::size_t node_count() const { return std::size_t(n_lon) * std::size_t(n_lat); }
};

/// Grid over a bounding box: spacing = largest span / res.
GridSpec build_grid(double lon_min, double lon_max, double lat_min, double lat_max, int res = 64);
/// Grid over the bounding box of the registry. Throws Error(DegenerateExtent)
/// when all cities coincide.
GridSpec build_grid(const CityRegistry& registry, int res = 64);

/// Wind on grid nodes for one day. `u` and `v` are n_lat x n_lon.
struct DailyWindGrid {
  GridSpec spec;
  DayNumber day = 0;
  Matrix u;
  Matrix v;
  /// Convex hull of the sample locations, counter-clockwise.
  std::vector<Vector2> hull;
  /// True when the samples were too few or collinear to triangulate.
  bool nearest_only = false;
};

/// Triangulates lexicographically sorted, distinct points. The triangulation
/// covers the convex hull and is refined to Delaunay by edge flips; ties are
/// broken by input order. Returns no triangles when all points are collinear.
std::vector<std::array<int, 3>> triangulate(const std::vector<Vector2>& points);

std::vector<Vector2> convex_hull(const std::vector<Vector2>& points);

/// Per-node interpolation weights for a fixed set of sample locations, reused
/// across days that share those locations.
class GridInterpolator {
 public:
  /// `points` must be sorted lexicographically and distinct.
  GridInterpolator(const std::vector<Vector2>& points, const GridSpec& spec);

  /// Values are per point, in the order given to the constructor.
  Matrix apply(const Vector& values) const;
  bool nearest_only() const { return nearest_only_; }
  const std::vector<Vector2>& hull() const { return hull_; }

 private:
  struct Stencil {
    std::array<int, 3> index{};
    std::array<double, 3> weight{};
  };
  GridSpec spec_;
  std::vector<Stencil> stencils_;  // row-major over nodes
  std::vector<Vector2> hull_;
  bool nearest_only_ = false;
};

/// Interpolates the day's samples onto the grid: barycentric inside the
/// sample hull, nearest sample outside. Throws Error(NoSamplesForDate).
DailyWindGrid rasterize_day(const WindSampleTable& samples, DayNumber day, const GridSpec& spec);

/// Rasterizes every listed day, sharing triangulations between days with the
/// same sample locations.
std::map<DayNumber, DailyWindGrid> rasterize_days(const WindSampleTable& samples,
                                                  const std::vector<DayNumber>& days,
                                                  const GridSpec& spec, unsigned threads = 1);

struct WindLookup {
  bool inside = false;  ///< false: the position has left the grid
  int row = 0;
  int col = 0;
  Vector2 wind = Vector2::Zero();
};

/// Nearest-node lookup; ties go to the lower (row, col).
WindLookup sample_at(const DailyWindGrid& grid, const Vector2& position);

/// CSV rows date,row,col,lon,lat,u,v (header included when requested).
std::string write_grid_dump(const DailyWindGrid& grid, bool header = true);

}  // namespace telecouple
