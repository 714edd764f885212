#include "hdsa/mesh.hpp"

#include <cmath>
#include <stdexcept>

namespace hdsa {

namespace {

TriangleGeometry triangle_geometry(const Mesh& mesh, const std::array<int, 3>& tri) {
  const double x0 = mesh.nodes(tri[0], 0), y0 = mesh.nodes(tri[0], 1);
  const double x1 = mesh.nodes(tri[1], 0), y1 = mesh.nodes(tri[1], 1);
  const double x2 = mesh.nodes(tri[2], 0), y2 = mesh.nodes(tri[2], 1);
  const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
  TriangleGeometry g;
  g.area = 0.5 * det;
  g.grad_x = {(y1 - y2) / det, (y2 - y0) / det, (y0 - y1) / det};
  g.grad_y = {(x2 - x1) / det, (x0 - x2) / det, (x1 - x0) / det};
  return g;
}

}  // namespace

Mesh build_mesh(int cells_per_side) {
  if (cells_per_side < 2)
    throw std::invalid_argument("build_mesh: cells_per_side must be at least 2");
  const int n = cells_per_side;
  const double h = 1.0 / n;

  Mesh mesh;
  mesh.cells_per_side = n;
  mesh.nodes.resize((n + 1) * (n + 1), 2);
  for (int iy = 0; iy <= n; ++iy)
    for (int ix = 0; ix <= n; ++ix) {
      const int id = iy * (n + 1) + ix;
      mesh.nodes(id, 0) = ix * h;
      mesh.nodes(id, 1) = iy * h;
    }

  mesh.triangles.reserve(2 * n * n);
  for (int cy = 0; cy < n; ++cy)
    for (int cx = 0; cx < n; ++cx) {
      const int ll = cy * (n + 1) + cx;
      const int lr = ll + 1;
      const int ul = ll + (n + 1);
      const int ur = ul + 1;
      mesh.triangles.push_back({ll, lr, ur});  // below the cell diagonal
      mesh.triangles.push_back({ll, ur, ul});  // above the cell diagonal
    }

  mesh.geometry.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles)
    mesh.geometry.push_back(triangle_geometry(mesh, tri));

  for (int i = 0; i < n; ++i) {
    mesh.boundary_edges.push_back({i, i + 1, Side::bottom});
    mesh.boundary_edges.push_back({i * (n + 1) + n, (i + 1) * (n + 1) + n, Side::right});
    mesh.boundary_edges.push_back({n * (n + 1) + i, n * (n + 1) + i + 1, Side::top});
    mesh.boundary_edges.push_back({i * (n + 1), (i + 1) * (n + 1), Side::left});
  }
  return mesh;
}

SparseMat assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double s = mesh.geometry[t].area / 12.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trips.emplace_back(tri[a], tri[b], s * (a == b ? 2.0 : 1.0));
  }
  SparseMat m(mesh.num_nodes(), mesh.num_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SparseMat assemble_weighted_stiffness(const Mesh& mesh, const NodalField& log_coeff) {
  if (log_coeff.size() != mesh.num_nodes())
    throw std::invalid_argument("assemble_weighted_stiffness: field size mismatch");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.geometry[t];
    const double mbar =
        (log_coeff[tri[0]] + log_coeff[tri[1]] + log_coeff[tri[2]]) / 3.0;
    const double w = std::exp(mbar) * g.area;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trips.emplace_back(tri[a], tri[b],
                           w * (g.grad_x[a] * g.grad_x[b] + g.grad_y[a] * g.grad_y[b]));
  }
  SparseMat k(mesh.num_nodes(), mesh.num_nodes());
  k.setFromTriplets(trips.begin(), trips.end());
  return k;
}

SparseMat assemble_boundary_mass(const Mesh& mesh, Side side) {
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& e : mesh.boundary_edges) {
    if (e.side != side) continue;
    const double dx = mesh.nodes(e.b, 0) - mesh.nodes(e.a, 0);
    const double dy = mesh.nodes(e.b, 1) - mesh.nodes(e.a, 1);
    const double len = std::sqrt(dx * dx + dy * dy);
    trips.emplace_back(e.a, e.a, len / 3.0);
    trips.emplace_back(e.b, e.b, len / 3.0);
    trips.emplace_back(e.a, e.b, len / 6.0);
    trips.emplace_back(e.b, e.a, len / 6.0);
  }
  SparseMat m(mesh.num_nodes(), mesh.num_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Eigen::SparseVector<double> interpolation_row(const Mesh& mesh, double x, double y) {
  constexpr double kTol = 1e-12;
  if (x < -kTol || x > 1.0 + kTol || y < -kTol || y > 1.0 + kTol)
    throw std::invalid_argument("interpolation_row: point outside the unit square");
  x = std::min(std::max(x, 0.0), 1.0);
  y = std::min(std::max(y, 0.0), 1.0);

  const int n = mesh.cells_per_side;
  const double h = mesh.spacing();
  const int cx0 = std::min(static_cast<int>(x / h), n - 1);
  const int cy0 = std::min(static_cast<int>(y / h), n - 1);

  // A point on a shared edge lies in several triangles; scanning candidate
  // cells in ascending triangle index makes the first hit the lowest index.
  for (int cy = std::max(cy0 - 1, 0); cy <= cy0; ++cy)
    for (int cx = std::max(cx0 - 1, 0); cx <= cx0; ++cx)
      for (int t = 0; t < 2; ++t) {
        const int tid = 2 * (cy * n + cx) + t;
        const auto& tri = mesh.triangles[tid];
        const auto& g = mesh.geometry[tid];
        const double ccx = (mesh.nodes(tri[0], 0) + mesh.nodes(tri[1], 0) +
                            mesh.nodes(tri[2], 0)) / 3.0;
        const double ccy = (mesh.nodes(tri[0], 1) + mesh.nodes(tri[1], 1) +
                            mesh.nodes(tri[2], 1)) / 3.0;
        std::array<double, 3> bary;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          bary[a] = 1.0 / 3.0 + g.grad_x[a] * (x - ccx) + g.grad_y[a] * (y - ccy);
          if (bary[a] < -1e-12) { inside = false; break; }
        }
        if (!inside) continue;
        double sum = 0.0;
        for (double& b : bary) { b = std::max(b, 0.0); sum += b; }
        Eigen::SparseVector<double> row(mesh.num_nodes());
        for (int a = 0; a < 3; ++a)
          if (bary[a] > 0.0) row.coeffRef(tri[a]) = bary[a] / sum;
        return row;
      }
  throw std::logic_error("interpolation_row: point location failed");
}

SparseMat interpolation_matrix(const Mesh& mesh,
                               const std::vector<std::array<double, 2>>& points) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto row = interpolation_row(mesh, points[i][0], points[i][1]);
    for (Eigen::SparseVector<double>::InnerIterator it(row); it; ++it)
      trips.emplace_back(static_cast<int>(i), static_cast<int>(it.index()), it.value());
  }
  SparseMat obs(static_cast<int>(points.size()), mesh.num_nodes());
  obs.setFromTriplets(trips.begin(), trips.end());
  return obs;
}

NodalField stiffness_dm_apply(const Mesh& mesh, const NodalField& m,
                              const NodalField& u, const NodalField& mhat) {
  NodalField out = NodalField::Zero(mesh.num_nodes());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.geometry[t];
    const double mbar = (m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0;
    const double hbar = (mhat[tri[0]] + mhat[tri[1]] + mhat[tri[2]]) / 3.0;
    const double w = std::exp(mbar) * hbar * g.area;
    double dux = 0.0, duy = 0.0;
    for (int a = 0; a < 3; ++a) {
      dux += g.grad_x[a] * u[tri[a]];
      duy += g.grad_y[a] * u[tri[a]];
    }
    for (int a = 0; a < 3; ++a)
      out[tri[a]] += w * (g.grad_x[a] * dux + g.grad_y[a] * duy);
  }
  return out;
}

NodalField stiffness_dm_transpose_apply(const Mesh& mesh, const NodalField& m,
                                        const NodalField& x, const NodalField& y) {
  NodalField out = NodalField::Zero(mesh.num_nodes());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.geometry[t];
    const double mbar = (m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0;
    double dxx = 0.0, dxy = 0.0, dyx = 0.0, dyy = 0.0;
    for (int a = 0; a < 3; ++a) {
      dxx += g.grad_x[a] * x[tri[a]];
      dxy += g.grad_y[a] * x[tri[a]];
      dyx += g.grad_x[a] * y[tri[a]];
      dyy += g.grad_y[a] * y[tri[a]];
    }
    // x^T K_T y spread evenly over the three vertices (centroid rule).
    const double q = std::exp(mbar) * g.area * (dxx * dyx + dxy * dyy) / 3.0;
    for (int a = 0; a < 3; ++a) out[tri[a]] += q;
  }
  return out;
}

NodalField stiffness_d2m_apply(const Mesh& mesh, const NodalField& m,
                               const NodalField& mhat, const NodalField& x,
                               const NodalField& y) {
  NodalField out = NodalField::Zero(mesh.num_nodes());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.geometry[t];
    const double mbar = (m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0;
    const double hbar = (mhat[tri[0]] + mhat[tri[1]] + mhat[tri[2]]) / 3.0;
    double dxx = 0.0, dxy = 0.0, dyx = 0.0, dyy = 0.0;
    for (int a = 0; a < 3; ++a) {
      dxx += g.grad_x[a] * x[tri[a]];
      dxy += g.grad_y[a] * x[tri[a]];
      dyx += g.grad_x[a] * y[tri[a]];
      dyy += g.grad_y[a] * y[tri[a]];
    }
    const double q = std::exp(mbar) * hbar * g.area * (dxx * dyx + dxy * dyy) / 3.0;
    for (int a = 0; a < 3; ++a) out[tri[a]] += q;
  }
  return out;
}

}  // namespace hdsa
