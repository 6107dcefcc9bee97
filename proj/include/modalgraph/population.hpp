#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "modalgraph/common.hpp"

namespace modalgraph {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Support {
  int node = 0;
  bool fixed_x = false;
  bool fixed_y = false;
};

using Edge = std::pair<int, int>;
using Triangle = std::array<int, 3>;

// Trapezoid with the long edge on y = 0, centred top edge at y = height_m.
struct TrapezoidSpec {
  double span_m = 80.0;
  double top_span_m = 48.0;
  double height_m = 12.0;
  int n_boundary_points = 14;
  // Interior point count is drawn uniformly from [min, max] per truss.
  int n_interior_min = 10;
  int n_interior_max = 18;
  double min_spacing_m = 3.2;
  double min_angle_deg = 15.0;
  int max_attempts = 2000;

  void validate() const;
  double area() const { return 0.5 * (span_m + top_span_m) * height_m; }
  bool contains(const Point2& p, double margin = 0.0) const;
};

struct TrussSpec {
  std::vector<Point2> nodes;
  std::vector<Edge> edges;  // i < j, sorted, unique
  std::vector<Support> supports;
  double youngs_modulus_pa = 200e9;
  double density_kg_m3 = 8015.0;
  double area_m2 = 0.5;
  std::int64_t population_id = 0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  // Throws InvalidArgument naming the violated invariant.
  void validate() const;
  bool connected() const;
  std::vector<std::vector<int>> neighbours() const;
};

struct MeshResult {
  TrussSpec truss;  // geometry only: nodes + edges
  std::vector<Triangle> triangles;
  int attempts = 0;
};

// Bowyer-Watson triangulation of an arbitrary point set. Triangles are returned
// counter-clockwise; degenerate (zero-area) triangles are dropped.
std::vector<Triangle> delaunay_triangulate(const std::vector<Point2>& points);

double min_triangle_angle_deg(const std::vector<Point2>& points, const Triangle& t);

// Boundary points plus random interior points, Delaunay-meshed, re-sampled until
// every triangle satisfies the minimum angle. Nodes are sorted by (x, y).
MeshResult delaunay_mesh(const TrapezoidSpec& boundary, std::uint64_t seed);

double sample_material(std::uint64_t seed);

// Simply supported: bottom-left corner pinned, bottom-right corner roller.
std::vector<TrussSpec> generate_population(int count, const TrapezoidSpec& boundary,
                                           std::uint64_t seed);

}  // namespace modalgraph
