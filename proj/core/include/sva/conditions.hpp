#pragma once

#include "sva/model.hpp"
#include "sva/odesolve.hpp"

namespace sva {

/// Probe-based estimates of the quantities entering the sufficient condition
/// for the instanton control to be an order-1 approximation:
///     delta_f + delta_b T < 1 / (lambda T C_T^2).
/// These are diagnostics over a finite probe set, not global suprema.
struct ConditionReport {
    double delta_f = 0.0;    ///< sup of lambda_max(Hess f), clamped at 0
    double delta_b = 0.0;    ///< sup over probes and grid times of lambda_max(theta_t . Hess b), clamped at 0
    double lipschitz = 0.0;  ///< max spectral norm of the drift Jacobian over probes
    double c_T = 1.0;        ///< exp(T * lipschitz)
    double lambda = 0.0;     ///< largest eigenvalue of D
    double lhs = 0.0;        ///< delta_f + delta_b T
    double rhs = 0.0;        ///< 1 / (lambda T C_T^2)
    bool holds = false;
    int n_probes = 0;
};

/// Probes a regular lattice with about n_probes points inside the box (the
/// per-axis count is ceil(n_probes^(1/d)), at least 2).
/// Throws ConfigError if n_probes < 1 or the instanton grid is inconsistent.
[[nodiscard]] ConditionReport check_theorem_conditions(const Problem& problem,
                                                       const InstantonPath& instanton,
                                                       const ProbeBox& box, int n_probes);

}  // namespace sva
