#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rb4dvar {

using Point = Eigen::Vector2d;

/// Raised for invalid discretization or experiment settings.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structured triangulation of (-1,1)^2. Nodes are numbered row by row
/// starting at the lower-left corner; the lower edge x2 = -1 carries the
/// homogeneous Dirichlet condition.
struct Mesh {
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> dirichlet_nodes;
  double h = 0.0;
  int cells_per_side = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
};

inline double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

inline Mesh build_mesh(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ConfigurationError("mesh: element size must be positive, got " + std::to_string(h));
  }
  const double cells = 2.0 / h;
  const long n = std::lround(cells);
  if (n < 1 || std::abs(cells - static_cast<double>(n)) > 1e-9 * cells) {
    throw ConfigurationError("mesh: 2/h must be a positive integer, got h = " +
                             std::to_string(h));
  }
  Mesh mesh;
  mesh.cells_per_side = static_cast<int>(n);
  mesh.h = 2.0 / static_cast<double>(n);
  const int side = mesh.cells_per_side + 1;
  mesh.nodes.reserve(static_cast<std::size_t>(side) * side);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      // Integer-indexed coordinates so that x2 = -1 holds exactly on row 0.
      mesh.nodes.emplace_back(-1.0 + 2.0 * i / mesh.cells_per_side,
                              -1.0 + 2.0 * j / mesh.cells_per_side);
    }
  }
  for (int j = 0; j < mesh.cells_per_side; ++j) {
    for (int i = 0; i < mesh.cells_per_side; ++i) {
      const int ll = j * side + i;
      const int lr = ll + 1;
      const int ul = ll + side;
      const int ur = ul + 1;
      // Each square is split along its lower-left to upper-right diagonal.
      mesh.triangles.push_back({ll, lr, ur});
      mesh.triangles.push_back({ll, ur, ul});
    }
  }
  for (int i = 0; i < side; ++i) mesh.dirichlet_nodes.push_back(i);
  return mesh;
}

/// Indices of the nodes not constrained by the Dirichlet condition, in
/// increasing order. These are the degrees of freedom of the FE spaces.
inline std::vector<int> free_nodes(const Mesh& mesh) {
  std::vector<bool> fixed(mesh.nodes.size(), false);
  for (int d : mesh.dirichlet_nodes) fixed[d] = true;
  std::vector<int> out;
  out.reserve(mesh.nodes.size() - mesh.dirichlet_nodes.size());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (!fixed[i]) out.push_back(i);
  }
  return out;
}

}  // namespace rb4dvar
