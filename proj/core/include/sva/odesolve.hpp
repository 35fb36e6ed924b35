#pragma once

#include <vector>

#include "sva/linalg.hpp"
#include "sva/model.hpp"
#include "sva/time_grid.hpp"

namespace sva {

/// Discretized instanton (phi_t, theta_t); column i holds the state at grid node i.
struct InstantonPath {
    TimeGrid grid;
    Matrix phi;    ///< d x (n_steps + 1)
    Matrix theta;  ///< d x (n_steps + 1)
    bool converged = false;
    int iterations = 0;
    double final_residual = 0.0;  ///< sup-norm of the last theta update, before relaxation
};

/// Discretized Riccati matrix K_t along an instanton.
struct RiccatiPath {
    TimeGrid grid;
    std::vector<Matrix> K;  ///< n_steps + 1 symmetric d x d matrices
};

struct InstantonOptions {
    double relax = 0.5;  ///< damping of the theta update, in (0, 1]
    int max_iter = 500;
    double tol = 1e-10;  ///< on the sup-norm change of theta between sweeps
};

/// Solves phi' = b(phi) + D theta, phi_0 = x0 and theta' = -grad b(phi)^T theta,
/// theta_T = grad f(phi_T) by damped forward/backward sweeps starting from
/// theta = 0. Each sweep integrates with RK4, theta (resp. phi) being linearly
/// interpolated between nodes at half steps.
///
/// Throws InstantonDivergence if the iteration produces non-finite values. A
/// path that has not met the tolerance after max_iter sweeps is returned with
/// converged = false.
[[nodiscard]] InstantonPath solve_instanton(const Problem& problem, const TimeGrid& grid,
                                            const InstantonOptions& options = {});

enum class RiccatiScheme { Euler, RK4 };

/// Integrates K' = -[grad b^T K + K grad b + theta . Hess b + K D K] backward
/// from K_T = Hess f(phi_T), symmetrizing after each step. Coefficients along
/// the instanton are linearly interpolated at half steps for RK4.
///
/// Throws ConfigError if the instanton did not converge and RiccatiBlowup on
/// non-finite entries.
[[nodiscard]] RiccatiPath solve_riccati(const Problem& problem, const InstantonPath& instanton,
                                        RiccatiScheme scheme = RiccatiScheme::RK4);

/// Right-hand side of the Riccati flow at a given state.
[[nodiscard]] Matrix riccati_rhs(const Problem& problem, const VectorCRef& phi,
                                 const VectorCRef& theta, const MatrixCRef& K);

/// Max-norm defects of the discrete instanton, measured by midpoint finite
/// differences: |(phi_{i+1} - phi_i)/dt - F(midpoint)| and likewise for theta.
struct InstantonDefect {
    double phi = 0.0;
    double theta = 0.0;
    double terminal = 0.0;  ///< |theta_T - grad f(phi_T)|
};
[[nodiscard]] InstantonDefect instanton_defect(const Problem& problem, const InstantonPath& path);

/// Max-norm midpoint defect of a Riccati path against riccati_rhs.
[[nodiscard]] double riccati_defect(const Problem& problem, const InstantonPath& instanton,
                                    const RiccatiPath& riccati);

}  // namespace sva
