#include "sva/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sva/error.hpp"

namespace sva {

namespace {

// Relative floor of the scaled state. Values below are flushed to zero; with
// interior weights >= 0.1 they stay normal until the next renormalization.
constexpr double kFlush = 1e-200;
constexpr long kRenormEvery = 16;

}  // namespace

FeynmanKacSolution solve_feynman_kac_1d(const Problem& problem, double epsilon, const PdeGrid& grid) {
    if (problem.dim() != 1) throw ConfigError("feynman-kac oracle: only one-dimensional models");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("feynman-kac oracle: eps must be positive");
    if (grid.n_x < 3) throw ConfigError("feynman-kac oracle: need at least 3 nodes");
    const double x0 = problem.observable.x0(0);
    if (!(grid.x_min < x0 && x0 < grid.x_max))
        throw ConfigError("feynman-kac oracle: x0 must lie strictly inside the grid");

    const auto& model = problem.model;
    const auto& f = problem.observable.f;
    const double T = problem.observable.horizon;
    const int nx = grid.n_x;
    const double dx = (grid.x_max - grid.x_min) / (nx - 1);
    const double diff = 0.5 * epsilon * model.cov()(0, 0);  // coefficient of u''
    const double ediff = 2.0 * diff / (dx * dx);               // eps D / dx^2

    Vector x(nx), b(nx), xs(1), bs(1);
    for (int j = 0; j < nx; ++j) {
        x(j) = grid.x_min + j * dx;
        xs(0) = x(j);
        model.drift(xs, bs);
        b(j) = bs(0);
    }

    // Largest stable step: eps D dt / dx^2 <= 0.45 everywhere and a
    // non-negative centre weight at upwinded nodes.
    double dt_max = 0.45 / ediff;
    for (int j = 0; j < nx; ++j)
        if (std::abs(b(j)) * dx > 2.0 * diff)
            dt_max = std::min(dt_max, 0.9 / (ediff + std::abs(b(j)) / dx));
    double dt = grid.dt_pde > 0.0 ? grid.dt_pde : dt_max;
    if (grid.dt_pde > 0.0 && grid.dt_pde > dt_max * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "feynman-kac oracle: dt_pde = " << grid.dt_pde << " exceeds the stability bound " << dt_max;
        throw ConfigError(msg.str());
    }
    const long n_steps = static_cast<long>(std::ceil(T / dt - 1e-9));
    dt = T / static_cast<double>(n_steps);

    const auto n = static_cast<std::size_t>(nx);
    std::vector<double> w_lo(n), w_mid(n), w_up(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double bj = b(static_cast<Eigen::Index>(j));
        if (std::abs(bj) * dx <= 2.0 * diff) {
            w_lo[j] = dt * (0.5 * ediff - 0.5 * bj / dx);
            w_up[j] = dt * (0.5 * ediff + 0.5 * bj / dx);
        } else if (bj > 0.0) {
            w_lo[j] = dt * 0.5 * ediff;
            w_up[j] = dt * (0.5 * ediff + bj / dx);
        } else {
            w_lo[j] = dt * (0.5 * ediff - bj / dx);
            w_up[j] = dt * 0.5 * ediff;
        }
        w_mid[j] = 1.0 - w_lo[j] - w_up[j];
    }

    // State: u_true = u * exp(scale).
    std::vector<double> u(n), next(n);
    double top = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nx; ++j) {
        xs(0) = x(j);
        u[static_cast<std::size_t>(j)] = f(xs) / epsilon;
        top = std::max(top, u[static_cast<std::size_t>(j)]);
    }
    if (!std::isfinite(top)) throw NumericalError("feynman-kac oracle: terminal data not finite");
    double scale = top;
    for (auto& v : u) {
        v = std::exp(v - scale);
        if (v < kFlush) v = 0.0;
    }

    // Characteristic positions for the Dirichlet data, in reversed time.
    const bool dirichlet = grid.boundary == PdeBoundary::DirichletCharacteristic;
    double y_left = grid.x_min, y_right = grid.x_max;
    auto flow_step = [&](double y) {
        auto drift = [&](double z) {
            xs(0) = z;
            model.drift(xs, bs);
            return bs(0);
        };
        const double k1 = drift(y);
        const double k2 = drift(y + 0.5 * dt * k1);
        const double k3 = drift(y + 0.5 * dt * k2);
        const double k4 = drift(y + dt * k3);
        return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    };
    auto boundary_value = [&](double y) {
        xs(0) = y;
        const double v = std::exp(f(xs) / epsilon - scale);
        return v < kFlush ? 0.0 : v;
    };

    const std::size_t last = n - 1;
    const double* lo = w_lo.data();
    const double* mid = w_mid.data();
    const double* up = w_up.data();
    for (long step = 0; step < n_steps; ++step) {
        const double* src = u.data();
        double* dst = next.data();
        for (std::size_t j = 1; j < last; ++j)
            dst[j] = lo[j] * src[j - 1] + mid[j] * src[j] + up[j] * src[j + 1];
        if (dirichlet) {
            y_left = flow_step(y_left);
            y_right = flow_step(y_right);
            next[0] = boundary_value(y_left);
            next[last] = boundary_value(y_right);
        } else {
            next[0] = mid[0] * u[0] + (lo[0] + up[0]) * u[1];
            next[last] = mid[last] * u[last] + (lo[last] + up[last]) * u[last - 1];
        }
        u.swap(next);
        if ((step + 1) % kRenormEvery != 0 && step + 1 != n_steps) continue;

        const double m = *std::max_element(u.begin(), u.end());
        if (!(m > 0.0) || !std::isfinite(m)) {
            std::ostringstream msg;
            msg << "feynman-kac oracle: solution degenerated at step " << step;
            throw NumericalError(msg.str());
        }
        const double inv = 1.0 / m;
        for (double& v : u) {
            v *= inv;
            v = v < kFlush ? 0.0 : v;
        }
        scale += std::log(m);
    }

    FeynmanKacSolution sol;
    sol.x = x;
    sol.h0.resize(nx);
    for (int j = 0; j < nx; ++j) {
        const double v = u[static_cast<std::size_t>(j)];
        sol.h0(j) = v > 0.0 ? epsilon * (scale + std::log(v)) : -std::numeric_limits<double>::infinity();
    }
    sol.dt = dt;
    sol.n_steps = n_steps;
    const double pos = (x0 - grid.x_min) / dx;
    const auto j = std::min(static_cast<int>(std::floor(pos)), nx - 2);
    const double frac = pos - j;
    sol.z_eps = (1.0 - frac) * sol.h0(j) + frac * sol.h0(j + 1);
    if (!std::isfinite(sol.z_eps)) throw NumericalError("feynman-kac oracle: non-finite value at x0");
    return sol;
}

PdeGrid default_pde_grid(const Problem& problem, double lo, double hi, double margin, int n_x) {
    const double x0 = problem.observable.x0(0);
    PdeGrid g;
    g.x_min = std::min(x0, lo) - margin;
    g.x_max = std::max(x0, hi) + margin;
    g.n_x = n_x;
    return g;
}

namespace {

// expm1(z)/z, continuous at 0.
double phi1(double z) { return std::abs(z) < 1e-12 ? 1.0 + 0.5 * z : std::expm1(z) / z; }

}  // namespace

LqSolution::LqSolution(double a, double q, double c, double horizon, double epsilon, double x0)
    : a_(a), q_(q), c_(c), horizon_(horizon), epsilon_(epsilon), x0_(x0) {
    if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("lq solution: q must be >= 0");
    if (!(horizon > 0.0)) throw ConfigError("lq solution: T must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("lq solution: eps must be positive");
    if (!std::isfinite(a) || !std::isfinite(c) || !std::isfinite(x0))
        throw ConfigError("lq solution: parameters must be finite");
    // With k(T) = -q <= 0, 1/k stays negative on [0, T]: no blow-up.
    for (double t : {0.0, 0.5 * horizon, horizon})
        if (!std::isfinite(k(t))) throw NumericalError("lq solution: Riccati blow-up");
}

double LqSolution::k(double t) const {
    if (q_ == 0.0) return 0.0;
    const double tau = horizon_ - t;
    // 1/k solves (1/k)' = -2a (1/k) + 1 with 1/k(T) = -1/q.
    const double inv = -std::exp(2.0 * a_ * tau) / q_ - tau * phi1(2.0 * a_ * tau);
    return 1.0 / inv;
}

double LqSolution::int_k(double t) const {
    if (q_ == 0.0) return 0.0;
    const double tau = horizon_ - t;
    return std::log(k(t) / k(horizon_)) + 2.0 * a_ * tau;
}

double LqSolution::int_k2_exp(double t) const {
    if (q_ == 0.0) return 0.0;
    const double tau = horizon_ - t;
    const double denom = -2.0 * a_ / q_ - 1.0;
    if (std::abs(denom) < 1e-10) return q_ * q_ * tau * phi1(2.0 * a_ * tau);  // k constant = -q
    return (k(horizon_) - k(t)) / denom;
}

double LqSolution::beta(double t) const {
    if (q_ == 0.0) return 0.0;
    return -c_ * k(t) * std::exp(a_ * (horizon_ - t));
}

double LqSolution::alpha(double t) const {
    return -0.5 * q_ * c_ * c_ + 0.5 * epsilon_ * int_k(t) + 0.5 * c_ * c_ * int_k2_exp(t);
}

double LqSolution::value(double t, double x) const {
    if (t < 0.0 || t > horizon_) throw ConfigError("lq solution: t outside [0, T]");
    return alpha(t) + beta(t) * x + 0.5 * k(t) * x * x;
}

double LqSolution::gradient(double t, double x) const {
    if (t < 0.0 || t > horizon_) throw ConfigError("lq solution: t outside [0, T]");
    return beta(t) + k(t) * x;
}

LqSolution lq_solution(double a, double q, double c, double horizon, double epsilon, double x0) {
    return LqSolution(a, q, c, horizon, epsilon, x0);
}

}  // namespace sva
