#pragma once

#include <array>
#include <vector>

#include "hdsa/types.hpp"

namespace hdsa {

/// Sides of the unit square, used to tag boundary edges.
enum class Side { bottom = 0, right = 1, top = 2, left = 3 };

struct BoundaryEdge {
  int a = 0, b = 0;  // node indices, ordered along the side
  Side side = Side::bottom;
};

/// Per-triangle geometry cached at construction: area and the constant
/// gradients of the three vertex shape functions.
struct TriangleGeometry {
  double area = 0.0;
  std::array<double, 3> grad_x{};
  std::array<double, 3> grad_y{};
};

/// Uniform triangulation of the unit square: n x n cells, each split along
/// the diagonal from its lower-left to its upper-right corner.
struct Mesh {
  Eigen::MatrixX2d nodes;                     // (n+1)^2 x 2 coordinates
  std::vector<std::array<int, 3>> triangles;  // CCW vertex triples
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<TriangleGeometry> geometry;
  int cells_per_side = 0;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  double spacing() const { return 1.0 / cells_per_side; }
};

/// Builds the structured mesh. Requires cells_per_side >= 2.
Mesh build_mesh(int cells_per_side);

/// P1 mass matrix (exact local integration).
SparseMat assemble_mass(const Mesh& mesh);

/// Stiffness matrix weighted by exp(m), with exp(m) evaluated once per
/// triangle at the vertex mean (one-point centroid rule). The derivative
/// helpers below differentiate exactly this discrete form, so adjoint-based
/// derivatives are exact for the discrete problem.
SparseMat assemble_weighted_stiffness(const Mesh& mesh, const NodalField& log_coeff);

/// 1D boundary mass matrix of one side, embedded in the full node set
/// (rows/columns of interior and other-side nodes are zero).
SparseMat assemble_boundary_mass(const Mesh& mesh, Side side);

/// Barycentric interpolation weights of a point, as a sparse length-n row
/// with at most three nonzeros. Points on edges shared by several triangles
/// are assigned to the containing triangle of lowest index. Throws if the
/// point lies outside the closed unit square.
Eigen::SparseVector<double> interpolation_row(const Mesh& mesh, double x, double y);

/// Stacked interpolation rows for a set of observation points.
SparseMat interpolation_matrix(const Mesh& mesh,
                               const std::vector<std::array<double, 2>>& points);

/// Directional derivative of m -> K(m) u:   (d/dm K(m) u)[mhat].
NodalField stiffness_dm_apply(const Mesh& mesh, const NodalField& m,
                              const NodalField& u, const NodalField& mhat);

/// Transpose action (d/dm K(m) x)^T y. Symmetric in (x, y) because the
/// element matrices are symmetric.
NodalField stiffness_dm_transpose_apply(const Mesh& mesh, const NodalField& m,
                                        const NodalField& x, const NodalField& y);

/// Second derivative term: gradient in m of  y^T (d/dm K(m) x)[mhat].
NodalField stiffness_d2m_apply(const Mesh& mesh, const NodalField& m,
                               const NodalField& mhat, const NodalField& x,
                               const NodalField& y);

}  // namespace hdsa
