#include "telecouple/windfield.hpp"

#include "telecouple/error.hpp"
#include "telecouple/log.hpp"
#include "telecouple/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace telecouple {

namespace {

double orient(const Vector2& a, const Vector2& b, const Vector2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Positive when d lies strictly inside the circumcircle of counter-clockwise abc.
bool in_circle(const Vector2& a, const Vector2& b, const Vector2& c, const Vector2& d) {
  const long double adx = a.x() - d.x(), ady = a.y() - d.y();
  const long double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const long double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const long double alift = adx * adx + ady * ady;
  const long double blift = bdx * bdx + bdy * bdy;
  const long double clift = cdx * cdx + cdy * cdy;
  const long double det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                          clift * (adx * bdy - bdx * ady);
  const long double permanent =
      alift * (std::fabs(bdx * cdy) + std::fabs(cdx * bdy)) +
      blift * (std::fabs(cdx * ady) + std::fabs(adx * cdy)) +
      clift * (std::fabs(adx * bdy) + std::fabs(bdx * ady));
  return det > 1e-10L * permanent;
}

struct Sample {
  Vector2 point;
  double u;
  double v;
};

// Sorted, coordinate-deduplicated samples for one day. Coincident samples are
// averaged so the result does not depend on input row order.
std::vector<Sample> day_samples(const WindSampleTable& table, DayNumber day) {
  const auto& idx = table.on_day(day);
  if (idx.empty()) {
    fail(ErrorCode::NoSamplesForDate, "no wind samples on " + format_date(day));
  }
  std::vector<Sample> raw;
  raw.reserve(idx.size());
  for (std::size_t i : idx) {
    const WindSample& s = table.records()[i];
    raw.push_back({Vector2(s.longitude, s.latitude), s.u, s.v});
  }
  std::sort(raw.begin(), raw.end(), [](const Sample& a, const Sample& b) {
    return std::tie(a.point.x(), a.point.y(), a.u, a.v) <
           std::tie(b.point.x(), b.point.y(), b.u, b.v);
  });
  std::vector<Sample> out;
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    double su = 0.0, sv = 0.0;
    while (j < raw.size() && raw[j].point == raw[i].point) {
      su += raw[j].u;
      sv += raw[j].v;
      ++j;
    }
    const double n = double(j - i);
    out.push_back({raw[i].point, su / n, sv / n});
    i = j;
  }
  return out;
}

}  // namespace

GridSpec build_grid(double lon_min, double lon_max, double lat_min, double lat_max, int res) {
  if (res < 2) fail(ErrorCode::InvalidArgument, "grid res must be at least 2");
  const double span_lon = lon_max - lon_min;
  const double span_lat = lat_max - lat_min;
  const double span = std::max(span_lon, span_lat);
  if (!(span > 0.0)) {
    fail(ErrorCode::DegenerateExtent, "all locations coincide; grid extent is zero");
  }
  GridSpec spec;
  spec.lon_min = lon_min;
  spec.lon_max = lon_max;
  spec.lat_min = lat_min;
  spec.lat_max = lat_max;
  spec.res = res;
  spec.spacing = span / res;
  spec.n_lon = static_cast<int>(std::ceil(span_lon / spec.spacing - 1e-9)) + 1;
  spec.n_lat = static_cast<int>(std::ceil(span_lat / spec.spacing - 1e-9)) + 1;
  return spec;
}

GridSpec build_grid(const CityRegistry& registry, int res) {
  if (registry.size() == 0) fail(ErrorCode::DegenerateExtent, "empty registry");
  double lon_min = registry[0].longitude, lon_max = lon_min;
  double lat_min = registry[0].latitude, lat_max = lat_min;
  for (const City& c : registry.cities()) {
    lon_min = std::min(lon_min, c.longitude);
    lon_max = std::max(lon_max, c.longitude);
    lat_min = std::min(lat_min, c.latitude);
    lat_max = std::max(lat_max, c.latitude);
  }
  return build_grid(lon_min, lon_max, lat_min, lat_max, res);
}

std::vector<std::array<int, 3>> triangulate(const std::vector<Vector2>& pts) {
  std::vector<std::array<int, 3>> tris;
  const int n = static_cast<int>(pts.size());
  if (n < 3) return tris;

  int k = 2;
  while (k < n && orient(pts[0], pts[1], pts[k]) == 0.0) ++k;
  if (k == n) return tris;

  // Fan the collinear prefix 0..k-1 to point k.
  const bool left = orient(pts[0], pts[k - 1], pts[k]) > 0.0;
  for (int i = 0; i + 1 < k; ++i) {
    tris.push_back(left ? std::array<int, 3>{i, i + 1, k} : std::array<int, 3>{i + 1, i, k});
  }
  std::vector<int> hull;
  for (int i = 0; i < k; ++i) hull.push_back(i);
  hull.push_back(k);
  if (!left) std::reverse(hull.begin(), hull.end());

  // Sweep: every later point lies outside the current hull.
  std::vector<char> visible;
  for (int p = k + 1; p < n; ++p) {
    const int m = static_cast<int>(hull.size());
    visible.assign(m, 0);
    for (int i = 0; i < m; ++i) {
      visible[i] = orient(pts[hull[i]], pts[hull[(i + 1) % m]], pts[p]) < 0.0;
    }
    int start = -1;
    for (int i = 0; i < m; ++i) {
      if (visible[i] && !visible[(i - 1 + m) % m]) {
        start = i;
        break;
      }
    }
    if (start < 0) continue;  // numerically on the hull boundary; skip
    int count = 0;
    while (count < m && visible[(start + count) % m]) {
      const int i = (start + count) % m;
      tris.push_back({hull[(i + 1) % m], hull[i], p});
      ++count;
    }
    std::vector<int> next{hull[start], p};
    for (int i = (start + count) % m; i != start; i = (i + 1) % m) next.push_back(hull[i]);
    hull = std::move(next);
  }

  // Lawson flips towards the Delaunay triangulation.
  std::map<std::pair<int, int>, int> owner;  // directed edge -> triangle
  auto register_tri = [&](int t) {
    const auto& tr = tris[t];
    for (int e = 0; e < 3; ++e) owner[{tr[e], tr[(e + 1) % 3]}] = t;
  };
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) register_tri(t);

  std::vector<std::pair<int, int>> stack;
  for (const auto& [edge, _] : owner) {
    if (edge.first < edge.second && owner.count({edge.second, edge.first})) stack.push_back(edge);
  }
  std::reverse(stack.begin(), stack.end());
  auto third = [&](int t, int a, int b) {
    for (int v : tris[t]) {
      if (v != a && v != b) return v;
    }
    return -1;
  };
  std::size_t budget = 10 * std::size_t(n) * std::size_t(n) + 100;
  while (!stack.empty() && budget-- > 0) {
    auto [a, b] = stack.back();
    stack.pop_back();
    const auto i1 = owner.find({a, b});
    const auto i2 = owner.find({b, a});
    if (i1 == owner.end() || i2 == owner.end()) continue;
    const int t1 = i1->second, t2 = i2->second;
    const int c = third(t1, a, b);
    const int d = third(t2, a, b);
    if (!in_circle(pts[a], pts[b], pts[c], pts[d])) continue;
    // Quad a, d, b, c is counter-clockwise; replace diagonal a-b by c-d.
    if (orient(pts[a], pts[d], pts[c]) <= 0.0 || orient(pts[d], pts[b], pts[c]) <= 0.0) continue;
    owner.erase({a, b});
    owner.erase({b, a});
    tris[t1] = {a, d, c};
    tris[t2] = {d, b, c};
    register_tri(t1);
    register_tri(t2);
    for (auto [x, y] : {std::pair{a, d}, std::pair{d, b}, std::pair{b, c}, std::pair{c, a}}) {
      stack.emplace_back(std::min(x, y), std::max(x, y));
    }
  }
  return tris;
}

std::vector<Vector2> convex_hull(const std::vector<Vector2>& input) {
  std::vector<Vector2> pts = input;
  std::sort(pts.begin(), pts.end(), [](const Vector2& a, const Vector2& b) {
    return std::tie(a.x(), a.y()) < std::tie(b.x(), b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vector2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

GridInterpolator::GridInterpolator(const std::vector<Vector2>& points, const GridSpec& spec)
    : spec_(spec), hull_(convex_hull(points)) {
  const auto tris = triangulate(points);
  nearest_only_ = tris.empty();
  const std::size_t nodes = spec.node_count();
  stencils_.assign(nodes, Stencil{{-1, -1, -1}, {0.0, 0.0, 0.0}});

  auto node_pos = [&](int row, int col) { return Vector2(spec.node_lon(col), spec.node_lat(row)); };

  for (const auto& tri : tris) {
    const Vector2& a = points[tri[0]];
    const Vector2& b = points[tri[1]];
    const Vector2& c = points[tri[2]];
    const double area = orient(a, b, c);
    if (std::fabs(area) <= 1e-14 * (a - c).squaredNorm()) continue;
    const double min_x = std::min({a.x(), b.x(), c.x()}), max_x = std::max({a.x(), b.x(), c.x()});
    const double min_y = std::min({a.y(), b.y(), c.y()}), max_y = std::max({a.y(), b.y(), c.y()});
    const int c0 = std::max(0, int(std::ceil((min_x - spec.lon_min) / spec.spacing - 1e-9)));
    const int c1 = std::min(spec.n_lon - 1, int(std::floor((max_x - spec.lon_min) / spec.spacing + 1e-9)));
    const int r0 = std::max(0, int(std::ceil((min_y - spec.lat_min) / spec.spacing - 1e-9)));
    const int r1 = std::min(spec.n_lat - 1, int(std::floor((max_y - spec.lat_min) / spec.spacing + 1e-9)));
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        Stencil& st = stencils_[std::size_t(row) * spec.n_lon + col];
        if (st.index[0] >= 0) continue;
        const Vector2 q = node_pos(row, col);
        const double wa = orient(q, b, c) / area;
        const double wb = orient(a, q, c) / area;
        const double wc = orient(a, b, q) / area;
        constexpr double tol = -1e-10;
        if (wa >= tol && wb >= tol && wc >= tol) {
          st.index = tri;
          st.weight = {wa, wb, wc};
        }
      }
    }
  }

  // Nodes outside every triangle take the nearest sample; ties go to the
  // earlier (lexicographically smaller) sample.
  for (int row = 0; row < spec.n_lat; ++row) {
    for (int col = 0; col < spec.n_lon; ++col) {
      Stencil& st = stencils_[std::size_t(row) * spec.n_lon + col];
      if (st.index[0] >= 0) continue;
      const Vector2 q = node_pos(row, col);
      int best = 0;
      double best_d = (points[0] - q).squaredNorm();
      for (int i = 1; i < static_cast<int>(points.size()); ++i) {
        const double d = (points[i] - q).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      st.index = {best, best, best};
      st.weight = {1.0, 0.0, 0.0};
    }
  }
}

Matrix GridInterpolator::apply(const Vector& values) const {
  Matrix out(spec_.n_lat, spec_.n_lon);
  for (int row = 0; row < spec_.n_lat; ++row) {
    for (int col = 0; col < spec_.n_lon; ++col) {
      const Stencil& st = stencils_[std::size_t(row) * spec_.n_lon + col];
      out(row, col) = st.weight[0] * values[st.index[0]] + st.weight[1] * values[st.index[1]] +
                      st.weight[2] * values[st.index[2]];
    }
  }
  return out;
}

namespace {

DailyWindGrid make_grid(const GridInterpolator& interp, const std::vector<Sample>& samples,
                        DayNumber day, const GridSpec& spec) {
  Vector u(static_cast<Index>(samples.size())), v(static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    u[Index(i)] = samples[i].u;
    v[Index(i)] = samples[i].v;
  }
  DailyWindGrid grid;
  grid.spec = spec;
  grid.day = day;
  grid.u = interp.apply(u);
  grid.v = interp.apply(v);
  grid.hull = interp.hull();
  grid.nearest_only = interp.nearest_only();
  return grid;
}

std::vector<Vector2> points_of(const std::vector<Sample>& samples) {
  std::vector<Vector2> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back(s.point);
  return pts;
}

}  // namespace

DailyWindGrid rasterize_day(const WindSampleTable& samples, DayNumber day, const GridSpec& spec) {
  const auto day_data = day_samples(samples, day);
  const GridInterpolator interp(points_of(day_data), spec);
  if (interp.nearest_only()) {
    warn("samples on " + format_date(day) +
         " are too few or collinear to triangulate; using nearest-sample rasterization");
  }
  return make_grid(interp, day_data, day, spec);
}

std::map<DayNumber, DailyWindGrid> rasterize_days(const WindSampleTable& samples,
                                                  const std::vector<DayNumber>& days,
                                                  const GridSpec& spec, unsigned threads) {
  struct Job {
    DayNumber day;
    std::vector<Sample> data;
    std::size_t interp;
  };
  std::vector<Job> jobs;
  std::vector<std::unique_ptr<GridInterpolator>> interps;
  std::map<std::vector<std::pair<double, double>>, std::size_t> cache;
  for (DayNumber day : days) {
    auto data = day_samples(samples, day);
    std::vector<std::pair<double, double>> key;
    key.reserve(data.size());
    for (const auto& s : data) key.emplace_back(s.point.x(), s.point.y());
    auto it = cache.find(key);
    if (it == cache.end()) {
      interps.push_back(std::make_unique<GridInterpolator>(points_of(data), spec));
      if (interps.back()->nearest_only()) {
        warn("samples on " + format_date(day) +
             " are too few or collinear to triangulate; using nearest-sample rasterization");
      }
      it = cache.emplace(std::move(key), interps.size() - 1).first;
    }
    jobs.push_back({day, std::move(data), it->second});
  }
  std::vector<DailyWindGrid> grids(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    grids[i] = make_grid(*interps[jobs[i].interp], jobs[i].data, jobs[i].day, spec);
  });
  std::map<DayNumber, DailyWindGrid> out;
  for (auto& g : grids) {
    const DayNumber d = g.day;
    out.emplace(d, std::move(g));
  }
  return out;
}

WindLookup sample_at(const DailyWindGrid& grid, const Vector2& position) {
  WindLookup out;
  const GridSpec& spec = grid.spec;
  if (!position.allFinite()) return out;
  const double x = (position.x() - spec.lon_min) / spec.spacing;
  const double y = (position.y() - spec.lat_min) / spec.spacing;
  constexpr double eps = 1e-12;
  if (x < -eps || y < -eps || x > spec.n_lon - 1 + eps || y > spec.n_lat - 1 + eps) return out;
  // Round half down so equidistant positions resolve to the lower index.
  out.col = std::clamp(static_cast<int>(std::ceil(x - 0.5)), 0, spec.n_lon - 1);
  out.row = std::clamp(static_cast<int>(std::ceil(y - 0.5)), 0, spec.n_lat - 1);
  out.inside = true;
  out.wind = Vector2(grid.u(out.row, out.col), grid.v(out.row, out.col));
  return out;
}

std::string write_grid_dump(const DailyWindGrid& grid, bool header) {
  std::ostringstream out;
  if (header) out << "date,row,col,lon,lat,u,v\n";
  const std::string date = format_date(grid.day);
  for (int row = 0; row < grid.spec.n_lat; ++row) {
    for (int col = 0; col < grid.spec.n_lon; ++col) {
      out << date << ',' << row << ',' << col << ',' << format_number(grid.spec.node_lon(col))
          << ',' << format_number(grid.spec.node_lat(row)) << ',' << format_number(grid.u(row, col))
          << ',' << format_number(grid.v(row, col)) << '\n';
    }
  }
  return out.str();
}

}  // namespace telecouple
