#include "sva/odesolve.hpp"

#include <cmath>
#include <sstream>

#include "sva/error.hpp"

namespace sva {

namespace {

// phi' = b(phi) + D theta, theta linearly interpolated at half steps.
void forward_sweep(const Problem& problem, const Matrix& theta, double dt, Matrix& phi) {
    const auto& model = problem.model;
    const Matrix& D = model.cov();
    const auto n_steps = phi.cols() - 1;
    const int d = problem.dim();
    Vector x(d), k1(d), k2(d), k3(d), k4(d), tmp(d), b(d), th_mid(d);
    phi.col(0) = problem.observable.x0;
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        x = phi.col(i);
        th_mid = 0.5 * (theta.col(i) + theta.col(i + 1));
        model.drift(x, b);
        k1.noalias() = b + D * theta.col(i);
        tmp = x + 0.5 * dt * k1;
        model.drift(tmp, b);
        k2.noalias() = b + D * th_mid;
        tmp = x + 0.5 * dt * k2;
        model.drift(tmp, b);
        k3.noalias() = b + D * th_mid;
        tmp = x + dt * k3;
        model.drift(tmp, b);
        k4.noalias() = b + D * theta.col(i + 1);
        phi.col(i + 1) = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

// theta' = -grad b(phi)^T theta backward from theta_T = grad f(phi_T).
void backward_sweep(const Problem& problem, const Matrix& phi, double dt, Matrix& theta) {
    const auto& model = problem.model;
    const auto n_steps = phi.cols() - 1;
    const int d = problem.dim();
    Vector th(d), k1(d), k2(d), k3(d), k4(d), tmp(d), ph_mid(d);
    Matrix j_hi(d, d), j_mid(d, d), j_lo(d, d);
    problem.observable.grad_f(phi.col(n_steps), th);
    theta.col(n_steps) = th;
    model.drift_jacobian(phi.col(n_steps), j_hi);
    for (Eigen::Index i = n_steps - 1; i >= 0; --i) {
        ph_mid = 0.5 * (phi.col(i) + phi.col(i + 1));
        model.drift_jacobian(ph_mid, j_mid);
        model.drift_jacobian(phi.col(i), j_lo);
        // In reversed time s = T - t: d theta / ds = J^T theta.
        k1.noalias() = j_hi.transpose() * th;
        tmp = th + 0.5 * dt * k1;
        k2.noalias() = j_mid.transpose() * tmp;
        tmp = th + 0.5 * dt * k2;
        k3.noalias() = j_mid.transpose() * tmp;
        tmp = th + dt * k3;
        k4.noalias() = j_lo.transpose() * tmp;
        th += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        theta.col(i) = th;
        j_hi.swap(j_lo);
    }
}

}  // namespace

InstantonPath solve_instanton(const Problem& problem, const TimeGrid& grid,
                              const InstantonOptions& options) {
    if (!(options.relax > 0.0 && options.relax <= 1.0))
        throw ConfigError("instanton: relax must lie in (0, 1]");
    if (options.max_iter < 1) throw ConfigError("instanton: max_iter must be positive");
    if (!(options.tol > 0.0)) throw ConfigError("instanton: tol must be positive");
    const int d = problem.dim();
    if (problem.observable.x0.size() != d) throw ConfigError("instanton: x0 dimension mismatch");
    if (std::abs(grid.horizon() - problem.observable.horizon) > 1e-12 * problem.observable.horizon)
        throw ConfigError("instanton: grid horizon differs from the problem horizon");

    const auto nodes = static_cast<Eigen::Index>(grid.n_nodes());
    const double dt = grid.dt();
    InstantonPath path{grid, Matrix::Zero(d, nodes), Matrix::Zero(d, nodes)};
    Matrix theta_new(d, nodes);

    for (int it = 1; it <= options.max_iter; ++it) {
        forward_sweep(problem, path.theta, dt, path.phi);
        if (!path.phi.allFinite())
            throw InstantonDivergence("instanton: non-finite position in forward sweep", it);
        backward_sweep(problem, path.phi, dt, theta_new);
        if (!theta_new.allFinite())
            throw InstantonDivergence("instanton: non-finite momentum in backward sweep", it);

        const double change = (theta_new - path.theta).cwiseAbs().maxCoeff();
        path.theta = (1.0 - options.relax) * path.theta + options.relax * theta_new;
        path.iterations = it;
        path.final_residual = change;
        if (change < options.tol) {
            path.converged = true;
            break;
        }
    }
    // Position consistent with the returned momentum.
    forward_sweep(problem, path.theta, dt, path.phi);
    if (!path.phi.allFinite())
        throw InstantonDivergence("instanton: non-finite position in final sweep", path.iterations);
    return path;
}

Matrix riccati_rhs(const Problem& problem, const VectorCRef& phi, const VectorCRef& theta,
                   const MatrixCRef& K) {
    const auto& model = problem.model;
    const Matrix J = model.drift_jacobian(phi);
    const Matrix H = model.drift_hessian_contract(phi, theta);
    return -(J.transpose() * K + K.transpose() * J + H + K.transpose() * model.cov() * K);
}

RiccatiPath solve_riccati(const Problem& problem, const InstantonPath& instanton,
                          RiccatiScheme scheme) {
    if (!instanton.converged) throw ConfigError("riccati: instanton did not converge");
    const auto& model = problem.model;
    const int d = problem.dim();
    const TimeGrid& grid = instanton.grid;
    const std::size_t n_steps = grid.n_steps();
    const double dt = grid.dt();
    const Matrix& D = model.cov();

    // In reversed time s = T - t: dK/ds = J^T K + K J + H + K D K =: G(K).
    auto G = [&D](const Matrix& J, const Matrix& H, const Matrix& K) -> Matrix {
        return J.transpose() * K + K.transpose() * J + H + K.transpose() * D * K;
    };

    RiccatiPath out{grid, std::vector<Matrix>(grid.n_nodes())};
    Matrix K = problem.observable.hessian(instanton.phi.col(static_cast<Eigen::Index>(n_steps)));
    K = 0.5 * (K + K.transpose());
    out.K[n_steps] = K;

    Matrix j_hi = model.drift_jacobian(instanton.phi.col(static_cast<Eigen::Index>(n_steps)));
    Matrix h_hi = model.drift_hessian_contract(instanton.phi.col(static_cast<Eigen::Index>(n_steps)),
                                               instanton.theta.col(static_cast<Eigen::Index>(n_steps)));
    Vector ph_mid(d), th_mid(d);
    for (std::size_t step = n_steps; step-- > 0;) {
        const auto i = static_cast<Eigen::Index>(step);
        const Matrix j_lo = model.drift_jacobian(instanton.phi.col(i));
        const Matrix h_lo = model.drift_hessian_contract(instanton.phi.col(i), instanton.theta.col(i));
        if (scheme == RiccatiScheme::Euler) {
            K += dt * G(j_hi, h_hi, K);
        } else {
            ph_mid = 0.5 * (instanton.phi.col(i) + instanton.phi.col(i + 1));
            th_mid = 0.5 * (instanton.theta.col(i) + instanton.theta.col(i + 1));
            const Matrix j_mid = model.drift_jacobian(ph_mid);
            const Matrix h_mid = model.drift_hessian_contract(ph_mid, th_mid);
            const Matrix k1 = G(j_hi, h_hi, K);
            const Matrix k2 = G(j_mid, h_mid, K + 0.5 * dt * k1);
            const Matrix k3 = G(j_mid, h_mid, K + 0.5 * dt * k2);
            const Matrix k4 = G(j_lo, h_lo, K + dt * k3);
            K += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        K = 0.5 * (K + K.transpose()).eval();
        if (!K.allFinite()) {
            std::ostringstream msg;
            msg << "riccati: blow-up at t = " << grid.time(step);
            throw RiccatiBlowup(msg.str(), grid.time(step));
        }
        out.K[step] = K;
        j_hi = j_lo;
        h_hi = h_lo;
    }
    return out;
}

InstantonDefect instanton_defect(const Problem& problem, const InstantonPath& path) {
    const auto& model = problem.model;
    const int d = problem.dim();
    const double dt = path.grid.dt();
    const auto n_steps = static_cast<Eigen::Index>(path.grid.n_steps());
    InstantonDefect out;
    Vector ph(d), th(d), b(d);
    Matrix J(d, d);
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        ph = 0.5 * (path.phi.col(i) + path.phi.col(i + 1));
        th = 0.5 * (path.theta.col(i) + path.theta.col(i + 1));
        model.drift(ph, b);
        model.drift_jacobian(ph, J);
        const Vector r_phi = (path.phi.col(i + 1) - path.phi.col(i)) / dt - (b + model.cov() * th);
        const Vector r_theta = (path.theta.col(i + 1) - path.theta.col(i)) / dt + J.transpose() * th;
        out.phi = std::max(out.phi, r_phi.cwiseAbs().maxCoeff());
        out.theta = std::max(out.theta, r_theta.cwiseAbs().maxCoeff());
    }
    const Vector grad = problem.observable.gradient(path.phi.col(n_steps));
    out.terminal = (path.theta.col(n_steps) - grad).cwiseAbs().maxCoeff();
    return out;
}

double riccati_defect(const Problem& problem, const InstantonPath& instanton,
                      const RiccatiPath& riccati) {
    const double dt = riccati.grid.dt();
    const auto n_steps = static_cast<Eigen::Index>(riccati.grid.n_steps());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        const Vector ph = 0.5 * (instanton.phi.col(i) + instanton.phi.col(i + 1));
        const Vector th = 0.5 * (instanton.theta.col(i) + instanton.theta.col(i + 1));
        const Matrix K = 0.5 * (riccati.K[i] + riccati.K[i + 1]);
        const Matrix r = (riccati.K[i + 1] - riccati.K[i]) / dt - riccati_rhs(problem, ph, th, K);
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace sva
