#pragma once

#include "sva/linalg.hpp"
#include "sva/model.hpp"

namespace sva {

enum class PdeBoundary {
    /// h(t, x_b) = f(flow of b over time T - t starting at x_b).
    DirichletCharacteristic,
    ZeroFlux,
};

struct PdeGrid {
    double x_min = -5.0;
    double x_max = 5.0;
    int n_x = 2001;
    /// Time step; 0 selects the largest stable step for the explicit scheme.
    double dt_pde = 0.0;
    PdeBoundary boundary = PdeBoundary::DirichletCharacteristic;
};

struct FeynmanKacSolution {
    double z_eps = 0.0;  ///< eps log u(0, x0)
    Vector x;            ///< spatial nodes
    Vector h0;           ///< eps log u(0, x) on the nodes
    double dt = 0.0;
    long n_steps = 0;
};

/// Solves the backward problem  du/dt + b u' + (eps/2) D u'' = 0, u(T) = e^{f/eps}
/// in one dimension with an explicit monotone scheme (central drift where the
/// cell Peclet number allows it, upwind elsewhere), kept in log form: the
/// state is u/e^{s} with a running log-scale s, so h = eps log u never
/// overflows. Throws ConfigError if d != 1, x0 is not inside the grid or the
/// requested step violates eps D dt/dx^2 <= 0.45, and NumericalError on
/// non-finite values.
[[nodiscard]] FeynmanKacSolution solve_feynman_kac_1d(const Problem& problem, double epsilon,
                                                      const PdeGrid& grid);

/// A grid covering x0 and the given extra range with `margin` on each side.
[[nodiscard]] PdeGrid default_pde_grid(const Problem& problem, double lo, double hi,
                                       double margin = 3.0, int n_x = 2001);

/// Closed-form solution of the HJB equation for b(x) = -a x, f(x) = -q (x-c)^2/2,
/// sigma = 1:  g(t, x) = alpha(t) + beta(t) x + k(t) x^2 / 2, where
///   k' = 2 a k - k^2,          k(T) = -q
///   beta' = (a - k) beta,      beta(T) = q c
///   alpha' = -eps k/2 - beta^2/2, alpha(T) = -q c^2/2.
class LqSolution {
  public:
    /// Throws ConfigError if q < 0, T <= 0 or eps <= 0.
    LqSolution(double a, double q, double c, double horizon, double epsilon, double x0);

    [[nodiscard]] double k(double t) const;
    [[nodiscard]] double beta(double t) const;
    [[nodiscard]] double alpha(double t) const;
    [[nodiscard]] double value(double t, double x) const;
    [[nodiscard]] double gradient(double t, double x) const;
    /// Z^eps = g(0, x0).
    [[nodiscard]] double z0() const { return value(0.0, x0_); }

  private:
    // int_t^T k(s) ds and int_t^T k(s)^2 e^{2a(T-s)} ds.
    [[nodiscard]] double int_k(double t) const;
    [[nodiscard]] double int_k2_exp(double t) const;

    double a_, q_, c_, horizon_, epsilon_, x0_;
};

[[nodiscard]] LqSolution lq_solution(double a, double q, double c, double horizon,
                                     double epsilon, double x0);

}  // namespace sva
