#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace hdsa {

/// Coefficient vector of a piecewise-linear finite element function.
using NodalField = Eigen::VectorXd;

/// Sparse operator acting on nodal coefficient vectors.
using SparseMat = Eigen::SparseMatrix<double>;

}  // namespace hdsa
