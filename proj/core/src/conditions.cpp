#include "sva/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sva/error.hpp"

namespace sva {

namespace {

// Regular lattice with `per_axis` points per coordinate (the centre if 1).
std::vector<Vector> lattice(const ProbeBox& box, int per_axis) {
    const auto d = box.lower.size();
    std::size_t total = 1;
    for (Eigen::Index k = 0; k < d; ++k) total *= static_cast<std::size_t>(per_axis);
    std::vector<Vector> points;
    points.reserve(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vector x(d);
        std::size_t rem = flat;
        for (Eigen::Index k = 0; k < d; ++k) {
            const auto idx = static_cast<int>(rem % static_cast<std::size_t>(per_axis));
            rem /= static_cast<std::size_t>(per_axis);
            const double s = per_axis == 1 ? 0.5 : static_cast<double>(idx) / (per_axis - 1);
            x(k) = box.lower(k) + s * (box.upper(k) - box.lower(k));
        }
        points.push_back(std::move(x));
    }
    return points;
}

}  // namespace

ConditionReport check_theorem_conditions(const Problem& problem, const InstantonPath& instanton,
                                         const ProbeBox& box, int n_probes) {
    const int d = problem.dim();
    if (n_probes < 1) throw ConfigError("condition check: empty probe set");
    if (box.lower.size() != d || box.upper.size() != d)
        throw ConfigError("condition check: probe box dimension mismatch");
    if ((box.upper.array() < box.lower.array()).any())
        throw ConfigError("condition check: probe box has upper < lower");
    if (instanton.theta.rows() != d || instanton.theta.cols() != static_cast<Eigen::Index>(instanton.grid.n_nodes()))
        throw ConfigError("condition check: instanton does not match the problem");

    const int per_axis =
        d == 1 ? n_probes
               : std::max(2, static_cast<int>(std::ceil(std::pow(n_probes, 1.0 / d) - 1e-9)));
    const auto probes = lattice(box, per_axis);

    const auto& model = problem.model;
    ConditionReport out;
    out.n_probes = static_cast<int>(probes.size());
    out.lambda = model.lambda_max();
    double sup_f = -std::numeric_limits<double>::infinity();
    double sup_b = -std::numeric_limits<double>::infinity();
    Matrix hess(d, d), J(d, d), hb(d, d);
    for (const auto& x : probes) {
        problem.observable.hess_f(x, hess);
        sup_f = std::max(sup_f, max_eigenvalue(0.5 * (hess + hess.transpose())));
        model.drift_jacobian(x, J);
        out.lipschitz = std::max(out.lipschitz, spectral_norm(J));
        for (Eigen::Index i = 0; i < instanton.theta.cols(); ++i) {
            model.drift_hessian_contract(x, instanton.theta.col(i), hb);
            sup_b = std::max(sup_b, max_eigenvalue(0.5 * (hb + hb.transpose())));
        }
    }
    out.delta_f = std::max(0.0, sup_f);
    out.delta_b = std::max(0.0, sup_b);
    const double T = problem.observable.horizon;
    out.c_T = std::exp(T * out.lipschitz);
    out.lhs = out.delta_f + out.delta_b * T;
    out.rhs = 1.0 / (out.lambda * T * out.c_T * out.c_T);
    out.holds = out.lhs < out.rhs;
    return out;
}

}  // namespace sva
