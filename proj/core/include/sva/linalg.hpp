#pragma once

#include <Eigen/Dense>

namespace sva {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using VectorCRef = Eigen::Ref<const Vector>;
using VectorRef = Eigen::Ref<Vector>;
using MatrixCRef = Eigen::Ref<const Matrix>;
using MatrixRef = Eigen::Ref<Matrix>;

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const MatrixCRef& sym);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const MatrixCRef& sym);

/// Largest singular value.
double spectral_norm(const MatrixCRef& m);

}  // namespace sva
