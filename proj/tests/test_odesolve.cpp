#include <doctest.h>

#include <cmath>

#include "sva/error.hpp"
#include "sva/odesolve.hpp"
#include "sva/oracle.hpp"

using namespace sva;

namespace {

// Closed-form instanton of the linear-quadratic case b = -a x, f = -q (x-c)^2/2, D = 1:
// theta_t = theta_T e^{a(t-T)} and phi_t = e^{-at} x0 + theta_T e^{-a(t+T)} (e^{2at} - 1)/(2a).
// The pair (phi_T, theta_T) solves a 2x2 linear system.
struct LinearInstanton {
    double a, theta_T, x0, T;
    double theta(double t) const { return theta_T * std::exp(a * (t - T)); }
    double phi(double t) const {
        return std::exp(-a * t) * x0 + theta_T * std::exp(-a * (t + T)) * std::expm1(2 * a * t) / (2 * a);
    }
};

LinearInstanton solve_linear_bvp(double a, double q, double c, double x0, double T) {
    // Unknowns (phi_T, theta_T):
    //   phi_T - theta_T (1 - e^{-2aT})/(2a) = e^{-aT} x0
    //   q phi_T + theta_T                    = q c
    Eigen::Matrix2d A;
    A << 1.0, -(-std::expm1(-2 * a * T)) / (2 * a), q, 1.0;
    const Eigen::Vector2d rhs(std::exp(-a * T) * x0, q * c);
    const Eigen::Vector2d sol = A.partialPivLu().solve(rhs);
    return {a, sol(1), x0, T};
}

Problem zero_observable_ou() {
    Problem p = make_ou_quartic();
    p.observable.f = [](const VectorCRef&) { return 0.0; };
    p.observable.grad_f = [](const VectorCRef&, VectorRef g) { g.setZero(); };
    p.observable.hess_f = [](const VectorCRef&, MatrixRef h) { h.setZero(); };
    return p;
}

}  // namespace

TEST_CASE("zero observable: momentum vanishes and the path relaxes") {
    const Problem p = zero_observable_ou();
    const TimeGrid grid(5.0, 1e-2);
    const auto path = solve_instanton(p, grid);
    CHECK(path.converged);
    CHECK(path.theta.cwiseAbs().maxCoeff() == 0.0);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.n_nodes(); ++i)
        err = std::max(err, std::abs(path.phi(0, static_cast<Eigen::Index>(i)) + std::exp(-grid.time(i))));
    CHECK(err < 1e-9);
    const auto K = solve_riccati(p, path);
    for (const auto& k : K.K) CHECK(k(0, 0) == 0.0);
}

TEST_CASE("lq instanton matches the linear boundary-value solve") {
    const double a = 1.0, q = 1.0, c = kLqCenter, T = 5.0;
    const Problem p = make_lq_case(a, q);
    const TimeGrid grid(T, 1e-3);
    const auto path = solve_instanton(p, grid);
    REQUIRE(path.converged);
    const auto exact = solve_linear_bvp(a, q, c, p.observable.x0(0), T);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        err = std::max(err, std::abs(path.phi(0, col) - exact.phi(grid.time(i))));
        err = std::max(err, std::abs(path.theta(0, col) - exact.theta(grid.time(i))));
    }
    CHECK(err < 1e-6);
}

TEST_CASE("lq Riccati matches the closed form") {
    // With a = 0 the undamped sweep map has slope -qT = -5, so relax must stay below 1/3.
    for (double a : {1.0, 0.5, 0.0}) {
        CAPTURE(a);
        const Problem p = make_lq_case(a, 1.0);
        const TimeGrid grid(5.0, 1e-3);
        const auto path = solve_instanton(p, grid, {0.2, 500, 1e-12});
        const auto K = solve_riccati(p, path);
        const LqSolution lq(a, 1.0, kLqCenter, 5.0, 1.0, -1.0);
        double err = 0.0;
        for (std::size_t i = 0; i < grid.n_nodes(); ++i) err = std::max(err, std::abs(K.K[i](0, 0) - lq.k(grid.time(i))));
        CHECK(err < 1e-6);
    }
}

TEST_CASE("a = 0 Riccati solution by hand integration") {
    // k' = -k^2, k(T) = -1  =>  k(t) = -1 / (1 + T - t).
    const Problem p = make_lq_case(0.0, 1.0);
    const TimeGrid grid(3.0, 1e-3);
    Problem p3 = p;
    p3.observable.horizon = 3.0;
    const auto K = solve_riccati(p3, solve_instanton(p3, grid, {0.2, 500, 1e-12}));
    double err = 0.0;
    for (std::size_t i = 0; i < grid.n_nodes(); ++i)
        err = std::max(err, std::abs(K.K[i](0, 0) + 1.0 / (1.0 + 3.0 - grid.time(i))));
    CHECK(err < 1e-9);
}

TEST_CASE("ou_quartic instanton") {
    const Problem p = make_ou_quartic();
    const TimeGrid grid(5.0, 5e-3);
    const auto path = solve_instanton(p, grid, {0.5, 500, 1e-10});
    REQUIRE(path.converged);
    CHECK(path.iterations < 200);
    CHECK(path.phi(0, 0) == -1.0);
    const double phi_T = path.phi(0, static_cast<Eigen::Index>(grid.n_steps()));
    CHECK(phi_T > -1.0);
    CHECK(phi_T < 2.0);
    const auto defect = instanton_defect(p, path);
    CHECK(defect.terminal < 1e-9);

    const auto K = solve_riccati(p, path);
    CHECK(K.K.back()(0, 0) == p.observable.hessian(Vector::Constant(1, phi_T))(0, 0));
    for (const auto& k : K.K) CHECK(k(0, 0) <= 0.0);
}

TEST_CASE("ou_quartic instanton agrees with a shooting solve") {
    // Shooting on theta_0: for the linear drift theta_t = theta_0 e^{t}; the
    // state equation is integrated with RK4 on a fine grid and the terminal
    // mismatch theta_T - grad f(phi_T) is driven to zero by bisection.
    const Problem p = make_ou_quartic();
    const double T = 5.0;
    auto mismatch = [&](double th0, double* phi_T) {
        const int n = 20000;
        const double h = T / n;
        double x = -1.0;
        auto rhs = [&](double t, double y) { return -y + th0 * std::exp(t); };
        for (int i = 0; i < n; ++i) {
            const double t = i * h;
            const double k1 = rhs(t, x), k2 = rhs(t + h / 2, x + h / 2 * k1);
            const double k3 = rhs(t + h / 2, x + h / 2 * k2), k4 = rhs(t + h, x + h * k3);
            x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        if (phi_T) *phi_T = x;
        return th0 * std::exp(T) + std::pow(x - 2.0, 3);
    };
    double lo = 0.0, hi = 0.1;
    REQUIRE(mismatch(lo, nullptr) < 0.0);
    REQUIRE(mismatch(hi, nullptr) > 0.0);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mismatch(mid, nullptr) < 0.0 ? lo : hi) = mid;
    }
    double phi_T = 0.0;
    mismatch(0.5 * (lo + hi), &phi_T);

    const auto path = solve_instanton(p, TimeGrid(T, 1e-3));
    CHECK(path.theta(0, 0) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-6));
    CHECK(path.phi(0, path.phi.cols() - 1) == doctest::Approx(phi_T).epsilon(1e-6));
}

TEST_CASE("instanton defect shrinks at least threefold when dt halves") {
    const Problem p = make_ou_quartic();
    const auto coarse = instanton_defect(p, solve_instanton(p, TimeGrid(5.0, 1e-2)));
    const auto fine = instanton_defect(p, solve_instanton(p, TimeGrid(5.0, 5e-3)));
    CHECK(coarse.phi / fine.phi >= 3.0);
    CHECK(coarse.theta / fine.theta >= 3.0);
}

TEST_CASE("Euler Riccati defect is first order, RK4 is higher order") {
    const Problem p = make_ou_quartic();
    const auto path_c = solve_instanton(p, TimeGrid(5.0, 1e-2));
    const auto path_f = solve_instanton(p, TimeGrid(5.0, 5e-3));
    const double e_c = riccati_defect(p, path_c, solve_riccati(p, path_c, RiccatiScheme::Euler));
    const double e_f = riccati_defect(p, path_f, solve_riccati(p, path_f, RiccatiScheme::Euler));
    CHECK(e_c / e_f == doctest::Approx(2.0).epsilon(0.15));

    const LqSolution lq(1.0, 1.0, kLqCenter, 5.0, 1.0, -1.0);
    const Problem lqp = make_lq_case(1.0, 1.0);
    auto max_err = [&](double dt, RiccatiScheme s) {
        const TimeGrid g(5.0, dt);
        const auto K = solve_riccati(lqp, solve_instanton(lqp, g), s);
        double e = 0.0;
        for (std::size_t i = 0; i < g.n_nodes(); ++i) e = std::max(e, std::abs(K.K[i](0, 0) - lq.k(g.time(i))));
        return e;
    };
    CHECK(max_err(1e-2, RiccatiScheme::Euler) / max_err(5e-3, RiccatiScheme::Euler) ==
          doctest::Approx(2.0).epsilon(0.15));
    CHECK(max_err(1e-2, RiccatiScheme::RK4) / max_err(5e-3, RiccatiScheme::RK4) > 10.0);
}

TEST_CASE("Riccati output is symmetric in two dimensions") {
    auto drift = [](const VectorCRef& x, VectorRef o) {
        o(0) = -x(0) + 0.5 * x(1);
        o(1) = -2.0 * x(1) + 0.1 * x(0) * x(0);
    };
    auto jac = [](const VectorCRef& x, MatrixRef o) {
        o << -1.0, 0.5, 0.2 * x(0), -2.0;
    };
    auto hess = [](const VectorCRef&, const VectorCRef& th, MatrixRef o) {
        o << 0.2 * th(1), 0.0, 0.0, 0.0;
    };
    Matrix sigma(2, 2);
    sigma << 1.0, 0.0, 0.4, 0.7;
    ObservableSpec obs;
    obs.f = [](const VectorCRef& x) { return -0.5 * (x(0) - 1) * (x(0) - 1) - 0.25 * x(1) * x(1) - 0.1 * x(0) * x(1); };
    obs.grad_f = [](const VectorCRef& x, VectorRef g) {
        g << -(x(0) - 1) - 0.1 * x(1), -0.5 * x(1) - 0.1 * x(0);
    };
    obs.hess_f = [](const VectorCRef&, MatrixRef h) { h << -1.0, -0.1, -0.1, -0.5; };
    obs.x0 = Vector::Zero(2);
    obs.horizon = 2.0;
    const Problem p{"planar", DiffusionModel(drift, jac, hess, sigma), obs};
    const auto path = solve_instanton(p, TimeGrid(2.0, 1e-2));
    REQUIRE(path.converged);
    const auto K = solve_riccati(p, path);
    for (const auto& k : K.K) CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((K.K.back() - p.observable.hessian(path.phi.col(path.phi.cols() - 1))).norm() == 0.0);
}

TEST_CASE("solver is deterministic") {
    const Problem p = make_ou_quartic();
    const TimeGrid grid(5.0, 5e-3);
    const auto a = solve_instanton(p, grid);
    const auto b = solve_instanton(p, grid);
    CHECK(a.phi == b.phi);
    CHECK(a.theta == b.theta);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("non-convergence and divergence are reported") {
    const Problem p = make_ou_quartic();
    const TimeGrid grid(5.0, 5e-3);
    const auto short_run = solve_instanton(p, grid, {0.5, 3, 1e-10});
    CHECK_FALSE(short_run.converged);
    CHECK(short_run.iterations == 3);
    CHECK_THROWS_AS((void)solve_riccati(p, short_run), ConfigError);

    CHECK_THROWS_AS((void)solve_instanton(p, grid, {0.0, 10, 1e-10}), ConfigError);
    CHECK_THROWS_AS((void)solve_instanton(p, grid, {1.5, 10, 1e-10}), ConfigError);

    // b(x) = x^2 from x0 = 1 blows up at t = 1 < T.
    Problem blow = p;
    blow.model = DiffusionModel([](const VectorCRef& x, VectorRef o) { o(0) = x(0) * x(0); },
                                [](const VectorCRef& x, MatrixRef o) { o(0, 0) = 2.0 * x(0); },
                                [](const VectorCRef&, const VectorCRef& th, MatrixRef o) { o(0, 0) = 2.0 * th(0); },
                                Matrix::Identity(1, 1));
    blow.observable.x0 = Vector::Constant(1, 1.0);
    try {
        (void)solve_instanton(blow, grid);
        FAIL("expected divergence");
    } catch (const InstantonDivergence& e) {
        CHECK(e.iteration() == 1);  // sweeps are counted from 1
    }
}

TEST_CASE("Riccati blow-up carries its time") {
    // Convex observable with a quadratic drift curvature term makes K explode.
    Problem p = make_lq_case(0.0, 1.0);
    p.observable.f = [](const VectorCRef& x) { return 5.0 * x(0) * x(0); };
    p.observable.grad_f = [](const VectorCRef& x, VectorRef g) { g(0) = 10.0 * x(0); };
    p.observable.hess_f = [](const VectorCRef&, MatrixRef h) { h(0, 0) = 10.0; };
    p.observable.x0 = Vector::Zero(1);
    // k' = -k^2 with k(T) = 10 reaches infinity at T - 0.1.
    const TimeGrid grid(5.0, 1e-3);
    const auto path = solve_instanton(p, grid);
    REQUIRE(path.converged);
    try {
        (void)solve_riccati(p, path);
        FAIL("expected blow-up");
    } catch (const RiccatiBlowup& e) {
        CHECK(e.time() == doctest::Approx(4.9).epsilon(0.01));
    }
}
