#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sva/linalg.hpp"
#include "sva/model.hpp"
#include "sva/odesolve.hpp"
#include "sva/time_grid.hpp"

namespace sva {

enum class ControlKind { Zero, Order1, Order2, Custom };

/// "none", "order1", "order2", "custom".
[[nodiscard]] std::string_view control_name(ControlKind kind);
/// Inverse of control_name for the three built-in kinds. Throws ConfigError.
[[nodiscard]] ControlKind parse_control_kind(std::string_view name);

/// User-supplied control g(t, x). value, gradient and value_at_start are
/// mandatory. time_derivative and hessian are only needed by the residual
/// diagnostic. The Novikov condition is the caller's responsibility.
struct CustomControl {
    std::function<double(double t, const VectorCRef& x)> value;
    std::function<void(double t, const VectorCRef& x, VectorRef out)> gradient;
    double value_at_start = 0.0;
    std::function<double(double t, const VectorCRef& x)> time_derivative;
    std::function<void(double t, const VectorCRef& x, MatrixRef out)> hessian;
    double order = 1.0;  ///< exponent k used to scale the residual diagnostic
};

/// Preallocated buffers for the per-step routines of BiasControl.
struct ControlScratch {
    explicit ControlScratch(int dim);
    Vector y, p, tmp;
    Matrix hess;
};

/// Importance-sampling control g(t, x): the zero control, the instanton
/// polynomial of order 1, the Riccati quadratic of order 2, or a custom one.
///
/// Order1:  f(phi_T) - 1/2 int_t^T theta.D theta ds + theta_t.(x - phi_t)
/// Order2:  Order1 + eps/2 int_t^T D:K ds + 1/2 (x - phi_t).K_t (x - phi_t)
///
/// Time integrals are tabulated with the trapezoid rule on the grid and all
/// path quantities are linearly interpolated between nodes. Instances are
/// immutable and cheap to copy.
class BiasControl {
  public:
    [[nodiscard]] static BiasControl zero(const Problem& problem, const TimeGrid& grid);
    [[nodiscard]] static BiasControl order1(const Problem& problem, InstantonPath instanton);
    [[nodiscard]] static BiasControl order2(const Problem& problem, InstantonPath instanton,
                                            RiccatiPath riccati, double epsilon);
    [[nodiscard]] static BiasControl custom(const Problem& problem, const TimeGrid& grid,
                                            CustomControl control);

    [[nodiscard]] ControlKind kind() const noexcept;
    [[nodiscard]] std::string_view name() const { return control_name(kind()); }
    /// 0 for the zero control, 1 or 2 for the instanton controls.
    [[nodiscard]] double order() const noexcept;
    [[nodiscard]] const TimeGrid& grid() const noexcept;
    [[nodiscard]] double epsilon() const noexcept;
    [[nodiscard]] const InstantonPath* instanton() const noexcept;
    [[nodiscard]] const RiccatiPath* riccati() const noexcept;

    /// g(t, x); throws ConfigError if t is outside [0, T].
    [[nodiscard]] double value(double t, const VectorCRef& x) const;
    [[nodiscard]] Vector gradient(double t, const VectorCRef& x) const;
    void gradient(double t, const VectorCRef& x, VectorRef out) const;
    /// g(0, x0), the deterministic free-energy predictor.
    [[nodiscard]] double value_at_start() const;

    /// int_{t_i}^T theta.D theta ds and int_{t_i}^T D:K ds per node.
    [[nodiscard]] const Vector& cum_theta_D_theta() const noexcept;
    [[nodiscard]] const Vector& cum_trace_DK() const noexcept;

    // Grid-node evaluations used by the simulation loop.
    [[nodiscard]] double value_at_node(std::size_t i, const VectorCRef& x,
                                       ControlScratch& scratch) const;
    void gradient_at_node(std::size_t i, const VectorCRef& x, VectorRef out) const;

    /// (d/dt g + H^eps g)(t_i, x) with H^eps g = b.grad g + eps/2 D:Hess g + 1/2 |sigma^T grad g|^2.
    /// drift_at_x must hold b(x). Time derivatives of phi, theta and K are the
    /// right-hand sides of their ODEs at the node, so the value is exact for
    /// the tabulated path. Throws ConfigError for a custom control lacking
    /// time_derivative or hessian.
    [[nodiscard]] double hjb_defect_at_node(std::size_t i, const VectorCRef& x,
                                            const VectorCRef& drift_at_x, double epsilon,
                                            ControlScratch& scratch) const;

    struct Tables;

  private:
    explicit BiasControl(std::shared_ptr<const Tables> tables) : tables_(std::move(tables)) {}
    std::shared_ptr<const Tables> tables_;
};

}  // namespace sva
