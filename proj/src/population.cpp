#include "modalgraph/population.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace modalgraph {

namespace {

double cross(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// > 0 when d lies strictly inside the circumcircle of counter-clockwise abc.
double in_circle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

std::vector<Point2> boundary_points(const TrapezoidSpec& b) {
  const double x0 = 0.5 * (b.span_m - b.top_span_m);
  const std::array<Point2, 4> corners{Point2{0.0, 0.0}, Point2{b.span_m, 0.0},
                                      Point2{x0 + b.top_span_m, b.height_m},
                                      Point2{x0, b.height_m}};
  std::array<double, 4> len{};
  double perimeter = 0.0;
  for (int e = 0; e < 4; ++e) {
    const Point2& p = corners[e];
    const Point2& q = corners[(e + 1) % 4];
    len[e] = std::hypot(q.x - p.x, q.y - p.y);
    perimeter += len[e];
  }
  // Intervals per edge by largest remainder, at least one per edge.
  const int total = std::max(4, b.n_boundary_points);
  std::array<int, 4> intervals{};
  std::array<double, 4> rem{};
  int assigned = 0;
  for (int e = 0; e < 4; ++e) {
    const double exact = total * len[e] / perimeter;
    intervals[e] = std::max(1, static_cast<int>(std::floor(exact)));
    rem[e] = exact - std::floor(exact);
    assigned += intervals[e];
  }
  while (assigned < total) {
    int best = 0;
    for (int e = 1; e < 4; ++e)
      if (rem[e] > rem[best]) best = e;
    ++intervals[best];
    rem[best] = -1.0;
    ++assigned;
  }
  while (assigned > total) {
    int best = -1;
    for (int e = 0; e < 4; ++e)
      if (intervals[e] > 1 && (best < 0 || rem[e] < rem[best])) best = e;
    --intervals[best];
    rem[best] = 2.0;
    --assigned;
  }
  std::vector<Point2> pts;
  for (int e = 0; e < 4; ++e) {
    const Point2& p = corners[e];
    const Point2& q = corners[(e + 1) % 4];
    for (int k = 0; k < intervals[e]; ++k) {
      const double s = static_cast<double>(k) / intervals[e];
      pts.push_back({p.x + s * (q.x - p.x), p.y + s * (q.y - p.y)});
    }
  }
  return pts;
}

double dist_to_segment(const Point2& p, const Point2& a, const Point2& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

}  // namespace

void TrapezoidSpec::validate() const {
  require(span_m > top_span_m && top_span_m > 0.0, "trapezoid requires span_m > top_span_m > 0");
  require(height_m > 0.0, "trapezoid requires height_m > 0");
  require(n_boundary_points >= 4, "trapezoid requires at least the 4 corner points");
  require(n_interior_min >= 0 && n_interior_max >= n_interior_min,
          "trapezoid interior point range must satisfy 0 <= min <= max");
  require(min_spacing_m >= 0.0, "min_spacing_m must be >= 0");
  require(min_angle_deg >= 0.0 && min_angle_deg < 60.0, "min_angle_deg must lie in [0, 60)");
  require(max_attempts >= 1, "max_attempts must be >= 1");
}

bool TrapezoidSpec::contains(const Point2& p, double margin) const {
  const double x0 = 0.5 * (span_m - top_span_m);
  if (p.y < margin || p.y > height_m - margin) return false;
  // Left and right edges are straight lines from the bottom corners to the top corners.
  const double xl = x0 * p.y / height_m;
  const double xr = span_m - x0 * p.y / height_m;
  const double slope_len = std::hypot(x0, height_m) / height_m;
  return p.x > xl + margin * slope_len && p.x < xr - margin * slope_len;
}

void TrussSpec::validate() const {
  const int n = node_count();
  require(n >= 2, "truss needs at least 2 nodes");
  std::set<Edge> seen;
  for (const auto& [i, j] : edges) {
    require(i >= 0 && j >= 0 && i < n && j < n, "edge references an invalid node index");
    require(i != j, "self-edge in truss");
    require(seen.insert({std::min(i, j), std::max(i, j)}).second, "duplicate edge in truss");
  }
  require(connected(), "truss edge graph is not connected");
  int fix_x = 0, fix_y = 0;
  for (const auto& s : supports) {
    require(s.node >= 0 && s.node < n, "support references an invalid node index");
    fix_x += s.fixed_x ? 1 : 0;
    fix_y += s.fixed_y ? 1 : 0;
  }
  require(fix_x >= 1 && fix_y >= 2, "supports must fix x at least once and y at least twice");
  require(youngs_modulus_pa >= 100e9 && youngs_modulus_pa <= 300e9,
          "youngs_modulus_pa outside [100e9, 300e9]");
  require(density_kg_m3 > 0.0 && area_m2 > 0.0, "density and area must be positive");
}

std::vector<std::vector<int>> TrussSpec::neighbours() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

bool TrussSpec::connected() const {
  if (nodes.empty()) return false;
  const auto adj = neighbours();
  std::vector<char> seen(nodes.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        q.push(u);
      }
    }
  }
  return count == nodes.size();
}

std::vector<Triangle> delaunay_triangulate(const std::vector<Point2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) return {};
  double minx = points[0].x, maxx = minx, miny = points[0].y, maxy = miny;
  for (const auto& p : points) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double span = std::max(maxx - minx, maxy - miny);
  const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
  std::vector<Point2> pts = points;
  pts.push_back({cx - 200.0 * span, cy - 100.0 * span});
  pts.push_back({cx + 200.0 * span, cy - 100.0 * span});
  pts.push_back({cx, cy + 200.0 * span});

  std::vector<Triangle> tris{{n, n + 1, n + 2}};
  for (int p = 0; p < n; ++p) {
    std::vector<Triangle> keep;
    std::map<Edge, int> boundary;
    for (const auto& t : tris) {
      if (in_circle(pts[t[0]], pts[t[1]], pts[t[2]], pts[p]) > 0.0) {
        for (int k = 0; k < 3; ++k) {
          const int a = t[k], b = t[(k + 1) % 3];
          ++boundary[{std::min(a, b), std::max(a, b)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    // Re-triangulate the cavity: edges that belonged to exactly one bad triangle.
    for (const auto& t : tris) {
      if (in_circle(pts[t[0]], pts[t[1]], pts[t[2]], pts[p]) <= 0.0) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        if (boundary[{std::min(a, b), std::max(a, b)}] != 1) continue;
        Triangle nt{a, b, p};
        if (cross(pts[a], pts[b], pts[p]) < 0.0) std::swap(nt[0], nt[1]);
        keep.push_back(nt);
      }
    }
    tris = std::move(keep);
  }

  std::vector<Triangle> out;
  for (const auto& t : tris) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) continue;
    const double a2 = cross(points[t[0]], points[t[1]], points[t[2]]);
    if (std::abs(a2) <= 1e-12 * span * span) continue;
    out.push_back(t);
  }
  return out;
}

double min_triangle_angle_deg(const std::vector<Point2>& points, const Triangle& t) {
  double best = 180.0;
  for (int k = 0; k < 3; ++k) {
    const Point2& a = points[t[k]];
    const Point2& b = points[t[(k + 1) % 3]];
    const Point2& c = points[t[(k + 2) % 3]];
    const double ux = b.x - a.x, uy = b.y - a.y, vx = c.x - a.x, vy = c.y - a.y;
    const double ang = std::atan2(std::abs(ux * vy - uy * vx), ux * vx + uy * vy);
    best = std::min(best, ang * 180.0 / kPi);
  }
  return best;
}

MeshResult delaunay_mesh(const TrapezoidSpec& boundary, std::uint64_t seed) {
  boundary.validate();
  const std::vector<Point2> border = boundary_points(boundary);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, boundary.span_m);
  std::uniform_real_distribution<double> uy(0.0, boundary.height_m);
  std::uniform_int_distribution<int> ucount(boundary.n_interior_min, boundary.n_interior_max);

  const Point2 c0{0.0, 0.0}, c1{boundary.span_m, 0.0};
  const double x0 = 0.5 * (boundary.span_m - boundary.top_span_m);
  const Point2 c2{x0 + boundary.top_span_m, boundary.height_m}, c3{x0, boundary.height_m};
  const std::array<std::pair<Point2, Point2>, 4> sides{
      std::pair{c0, c1}, std::pair{c1, c2}, std::pair{c2, c3}, std::pair{c3, c0}};

  for (int attempt = 1; attempt <= boundary.max_attempts; ++attempt) {
    std::vector<Point2> pts = border;
    const int want = ucount(rng);
    int tries = 0;
    while (static_cast<int>(pts.size()) < static_cast<int>(border.size()) + want && tries < 20000) {
      ++tries;
      const Point2 p{ux(rng), uy(rng)};
      if (!boundary.contains(p)) continue;
      bool ok = true;
      for (const auto& [a, b] : sides)
        if (dist_to_segment(p, a, b) < 0.5 * boundary.min_spacing_m) ok = false;
      for (const auto& q : pts)
        if (std::hypot(p.x - q.x, p.y - q.y) < boundary.min_spacing_m) ok = false;
      if (ok) pts.push_back(p);
    }
    if (static_cast<int>(pts.size()) != static_cast<int>(border.size()) + want) continue;

    // Index nodes by (x, y) so downstream even sensor selection is geometric.
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
      return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    auto tris = delaunay_triangulate(pts);
    double area = 0.0;
    double min_angle = 180.0;
    for (const auto& t : tris) {
      area += 0.5 * std::abs(cross(pts[t[0]], pts[t[1]], pts[t[2]]));
      min_angle = std::min(min_angle, min_triangle_angle_deg(pts, t));
    }
    if (std::abs(area - boundary.area()) > 1e-6 * boundary.area()) continue;
    if (min_angle < boundary.min_angle_deg) continue;

    std::set<Edge> edges;
    for (const auto& t : tris)
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        edges.insert({std::min(a, b), std::max(a, b)});
      }
    MeshResult out;
    out.truss.nodes = std::move(pts);
    out.truss.edges.assign(edges.begin(), edges.end());
    out.triangles = std::move(tris);
    out.attempts = attempt;
    if (!out.truss.connected()) continue;
    return out;
  }
  std::ostringstream msg;
  msg << "delaunay_mesh: no mesh met the " << boundary.min_angle_deg << " deg minimum angle after "
      << boundary.max_attempts << " attempts";
  throw NumericalError(msg.str());
}

double sample_material(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(100e9, 300e9);
  return u(rng);
}

std::vector<TrussSpec> generate_population(int count, const TrapezoidSpec& boundary,
                                           std::uint64_t seed) {
  require(count >= 1, "generate_population: count must be >= 1");
  std::vector<TrussSpec> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t item = derive_seed(seed, static_cast<std::uint64_t>(i));
    MeshResult mesh = delaunay_mesh(boundary, derive_seed(item, "mesh"));
    TrussSpec truss = std::move(mesh.truss);
    truss.youngs_modulus_pa = sample_material(derive_seed(item, "material"));
    truss.population_id = i;
    // Corners are the extreme bottom nodes: (0, 0) and (span, 0).
    int left = -1, right = -1;
    for (int k = 0; k < truss.node_count(); ++k) {
      const auto& p = truss.nodes[k];
      if (std::abs(p.y) < 1e-12 && std::abs(p.x) < 1e-12) left = k;
      if (std::abs(p.y) < 1e-12 && std::abs(p.x - boundary.span_m) < 1e-9) right = k;
    }
    truss.supports = {{left, true, true}, {right, false, true}};
    truss.validate();
    out.push_back(std::move(truss));
  }
  return out;
}

}  // namespace modalgraph
