#include "sva/bias.hpp"

#include <cmath>
#include <optional>

#include "sva/error.hpp"

namespace sva {

std::string_view control_name(ControlKind kind) {
    switch (kind) {
        case ControlKind::Zero: return "none";
        case ControlKind::Order1: return "order1";
        case ControlKind::Order2: return "order2";
        case ControlKind::Custom: return "custom";
    }
    return "unknown";
}

ControlKind parse_control_kind(std::string_view name) {
    if (name == "none") return ControlKind::Zero;
    if (name == "order1") return ControlKind::Order1;
    if (name == "order2") return ControlKind::Order2;
    throw ConfigError("unknown control '" + std::string(name) + "' (expected none, order1, order2)");
}

ControlScratch::ControlScratch(int dim)
    : y(Vector::Zero(dim)), p(Vector::Zero(dim)), tmp(Vector::Zero(dim)), hess(Matrix::Zero(dim, dim)) {}

struct BiasControl::Tables {
    ControlKind kind = ControlKind::Zero;
    TimeGrid grid;
    double epsilon = 0.0;
    double order = 0.0;
    Matrix D;
    Vector x0;

    std::optional<InstantonPath> instanton;
    std::optional<RiccatiPath> riccati;
    double f_phi_T = 0.0;
    Vector cum_theta_D_theta;
    Vector cum_trace_DK;

    // Per-node quantities for the HJB defect.
    Matrix phi_dot;
    Matrix theta_dot;
    std::vector<Matrix> K_dot;
    Matrix grad_offset;  // theta_i - K_i phi_i, so that grad g = grad_offset + K_i x
    Vector theta_D_theta;
    Vector theta_phi_dot;
    Vector trace_DK;

    CustomControl custom;
    double start_value = 0.0;

    explicit Tables(const TimeGrid& g) : grid(g) {}
};

namespace {

Vector cumulative_from_end(const Vector& integrand, double dt) {
    const auto n = integrand.size();
    Vector cum(n);
    cum(n - 1) = 0.0;
    for (Eigen::Index i = n - 2; i >= 0; --i)
        cum(i) = cum(i + 1) + 0.5 * dt * (integrand(i) + integrand(i + 1));
    return cum;
}

void check_instanton(const Problem& problem, const InstantonPath& instanton) {
    if (!instanton.converged) throw ConfigError("bias: instanton did not converge");
    if (instanton.phi.rows() != problem.dim() ||
        instanton.phi.cols() != static_cast<Eigen::Index>(instanton.grid.n_nodes()))
        throw ConfigError("bias: instanton shape does not match the problem");
}

}  // namespace

BiasControl BiasControl::zero(const Problem& problem, const TimeGrid& grid) {
    auto t = std::make_shared<Tables>(grid);
    t->kind = ControlKind::Zero;
    t->D = problem.model.cov();
    t->x0 = problem.observable.x0;
    return BiasControl(std::move(t));
}

BiasControl BiasControl::order1(const Problem& problem, InstantonPath instanton) {
    check_instanton(problem, instanton);
    auto t = std::make_shared<Tables>(instanton.grid);
    t->kind = ControlKind::Order1;
    t->order = 1.0;
    t->D = problem.model.cov();
    t->x0 = problem.observable.x0;

    const int d = problem.dim();
    const auto nodes = static_cast<Eigen::Index>(instanton.grid.n_nodes());
    t->theta_D_theta.resize(nodes);
    t->theta_phi_dot.resize(nodes);
    t->phi_dot.resize(d, nodes);
    t->theta_dot.resize(d, nodes);
    Vector b(d);
    Matrix J(d, d);
    for (Eigen::Index i = 0; i < nodes; ++i) {
        const auto th = instanton.theta.col(i);
        problem.model.drift(instanton.phi.col(i), b);
        problem.model.drift_jacobian(instanton.phi.col(i), J);
        t->phi_dot.col(i) = b + t->D * th;
        t->theta_dot.col(i) = -J.transpose() * th;
        t->theta_D_theta(i) = th.dot(t->D * th);
        t->theta_phi_dot(i) = th.dot(t->phi_dot.col(i));
    }
    t->cum_theta_D_theta = cumulative_from_end(t->theta_D_theta, instanton.grid.dt());
    t->cum_trace_DK = Vector::Zero(nodes);
    t->trace_DK = Vector::Zero(nodes);
    t->f_phi_T = problem.observable.f(instanton.phi.col(nodes - 1));
    t->instanton = std::move(instanton);

    BiasControl control(t);
    t->start_value = control.value(0.0, t->x0);
    return control;
}

BiasControl BiasControl::order2(const Problem& problem, InstantonPath instanton,
                                RiccatiPath riccati, double epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw ConfigError("bias: order-2 control needs eps > 0");
    if (!(riccati.grid == instanton.grid) || riccati.K.size() != instanton.grid.n_nodes())
        throw ConfigError("bias: Riccati path is not on the instanton grid");
    const BiasControl base = order1(problem, std::move(instanton));
    auto t = std::make_shared<Tables>(*base.tables_);
    t->kind = ControlKind::Order2;
    t->order = 2.0;
    t->epsilon = epsilon;

    const auto& path = *t->instanton;
    const auto nodes = static_cast<Eigen::Index>(path.grid.n_nodes());
    t->trace_DK.resize(nodes);
    t->K_dot.resize(static_cast<std::size_t>(nodes));
    t->grad_offset.resize(problem.dim(), nodes);
    for (Eigen::Index i = 0; i < nodes; ++i) {
        const Matrix& K = riccati.K[static_cast<std::size_t>(i)];
        t->trace_DK(i) = t->D.cwiseProduct(K).sum();
        t->K_dot[static_cast<std::size_t>(i)] =
            riccati_rhs(problem, path.phi.col(i), path.theta.col(i), K);
        t->grad_offset.col(i) = path.theta.col(i) - K * path.phi.col(i);
    }
    t->cum_trace_DK = cumulative_from_end(t->trace_DK, path.grid.dt());
    t->riccati = std::move(riccati);

    BiasControl control(t);
    t->start_value = control.value(0.0, t->x0);
    return control;
}

BiasControl BiasControl::custom(const Problem& problem, const TimeGrid& grid, CustomControl control) {
    if (!control.value || !control.gradient)
        throw ConfigError("bias: custom control needs value and gradient");
    if (!(control.order > 0.0)) throw ConfigError("bias: custom control order must be positive");
    auto t = std::make_shared<Tables>(grid);
    t->kind = ControlKind::Custom;
    t->order = control.order;
    t->D = problem.model.cov();
    t->x0 = problem.observable.x0;
    t->start_value = control.value_at_start;
    t->custom = std::move(control);
    return BiasControl(std::move(t));
}

ControlKind BiasControl::kind() const noexcept { return tables_->kind; }
double BiasControl::order() const noexcept { return tables_->order; }
const TimeGrid& BiasControl::grid() const noexcept { return tables_->grid; }
double BiasControl::epsilon() const noexcept { return tables_->epsilon; }
const InstantonPath* BiasControl::instanton() const noexcept {
    return tables_->instanton ? &*tables_->instanton : nullptr;
}
const RiccatiPath* BiasControl::riccati() const noexcept {
    return tables_->riccati ? &*tables_->riccati : nullptr;
}
const Vector& BiasControl::cum_theta_D_theta() const noexcept { return tables_->cum_theta_D_theta; }
const Vector& BiasControl::cum_trace_DK() const noexcept { return tables_->cum_trace_DK; }
double BiasControl::value_at_start() const { return tables_->start_value; }

double BiasControl::value(double t, const VectorCRef& x) const {
    const Tables& tb = *tables_;
    const auto loc = tb.grid.locate(t);
    if (tb.kind == ControlKind::Zero) return 0.0;
    if (tb.kind == ControlKind::Custom) return tb.custom.value(t, x);
    if (loc.weight == 0.0) {
        ControlScratch scratch(static_cast<int>(x.size()));
        return value_at_node(loc.index, x, scratch);
    }
    const auto i = static_cast<Eigen::Index>(loc.index);
    const double w = loc.weight;
    const auto& path = *tb.instanton;
    const Vector phi = (1 - w) * path.phi.col(i) + w * path.phi.col(i + 1);
    const Vector theta = (1 - w) * path.theta.col(i) + w * path.theta.col(i + 1);
    const Vector y = x - phi;
    double g = tb.f_phi_T - 0.5 * ((1 - w) * tb.cum_theta_D_theta(i) + w * tb.cum_theta_D_theta(i + 1)) +
               theta.dot(y);
    if (tb.kind == ControlKind::Order2) {
        const auto& K = tb.riccati->K;
        const Matrix Kt = (1 - w) * K[loc.index] + w * K[loc.index + 1];
        g += 0.5 * tb.epsilon * ((1 - w) * tb.cum_trace_DK(i) + w * tb.cum_trace_DK(i + 1));
        g += 0.5 * y.dot(Kt * y);
    }
    return g;
}

void BiasControl::gradient(double t, const VectorCRef& x, VectorRef out) const {
    const Tables& tb = *tables_;
    const auto loc = tb.grid.locate(t);
    switch (tb.kind) {
        case ControlKind::Zero: out.setZero(); return;
        case ControlKind::Custom: tb.custom.gradient(t, x, out); return;
        default: break;
    }
    if (loc.weight == 0.0) {
        gradient_at_node(loc.index, x, out);
        return;
    }
    const auto i = static_cast<Eigen::Index>(loc.index);
    const double w = loc.weight;
    const auto& path = *tb.instanton;
    out = (1 - w) * path.theta.col(i) + w * path.theta.col(i + 1);
    if (tb.kind == ControlKind::Order2) {
        const auto& K = tb.riccati->K;
        const Vector phi = (1 - w) * path.phi.col(i) + w * path.phi.col(i + 1);
        out += ((1 - w) * K[loc.index] + w * K[loc.index + 1]) * (x - phi);
    }
}

Vector BiasControl::gradient(double t, const VectorCRef& x) const {
    Vector out(x.size());
    gradient(t, x, out);
    return out;
}

double BiasControl::value_at_node(std::size_t i, const VectorCRef& x, ControlScratch& s) const {
    const Tables& tb = *tables_;
    switch (tb.kind) {
        case ControlKind::Zero: return 0.0;
        case ControlKind::Custom: return tb.custom.value(tb.grid.time(i), x);
        default: break;
    }
    const auto col = static_cast<Eigen::Index>(i);
    const auto& path = *tb.instanton;
    s.y = x - path.phi.col(col);
    double g = tb.f_phi_T - 0.5 * tb.cum_theta_D_theta(col) + path.theta.col(col).dot(s.y);
    if (tb.kind == ControlKind::Order2) {
        s.tmp.noalias() = tb.riccati->K[i] * s.y;
        g += 0.5 * tb.epsilon * tb.cum_trace_DK(col) + 0.5 * s.y.dot(s.tmp);
    }
    return g;
}

void BiasControl::gradient_at_node(std::size_t i, const VectorCRef& x, VectorRef out) const {
    const Tables& tb = *tables_;
    const auto col = static_cast<Eigen::Index>(i);
    switch (tb.kind) {
        case ControlKind::Zero: out.setZero(); return;
        case ControlKind::Order1: out = tb.instanton->theta.col(col); return;
        case ControlKind::Order2:
            out = tb.grad_offset.col(col);
            out.noalias() += tb.riccati->K[i].lazyProduct(x);
            return;
        case ControlKind::Custom: tb.custom.gradient(tb.grid.time(i), x, out); return;
    }
}

double BiasControl::hjb_defect_at_node(std::size_t i, const VectorCRef& x,
                                       const VectorCRef& drift_at_x, double epsilon,
                                       ControlScratch& s) const {
    const Tables& tb = *tables_;
    const auto col = static_cast<Eigen::Index>(i);
    switch (tb.kind) {
        case ControlKind::Zero: return 0.0;
        case ControlKind::Custom: {
            if (!tb.custom.time_derivative || !tb.custom.hessian)
                throw ConfigError("bias: custom control lacks time_derivative/hessian for the residual");
            const double t = tb.grid.time(i);
            tb.custom.gradient(t, x, s.p);
            tb.custom.hessian(t, x, s.hess);
            s.tmp.noalias() = tb.D * s.p;
            return tb.custom.time_derivative(t, x) + drift_at_x.dot(s.p) +
                   0.5 * epsilon * tb.D.cwiseProduct(s.hess).sum() + 0.5 * s.p.dot(s.tmp);
        }
        default: break;
    }
    const auto& path = *tb.instanton;
    const auto theta = path.theta.col(col);
    s.y = x - path.phi.col(col);
    // d/dt g along fixed x, with phi', theta', K' from their ODEs.
    double dg_dt = 0.5 * tb.theta_D_theta(col) + tb.theta_dot.col(col).dot(s.y) - tb.theta_phi_dot(col);
    s.p = theta;
    double second_order = 0.0;
    if (tb.kind == ControlKind::Order2) {
        const Matrix& K = tb.riccati->K[i];
        s.tmp.noalias() = K * s.y;
        dg_dt += -0.5 * tb.epsilon * tb.trace_DK(col) - tb.phi_dot.col(col).dot(s.tmp);
        s.p += s.tmp;
        s.tmp.noalias() = tb.K_dot[i] * s.y;
        dg_dt += 0.5 * s.y.dot(s.tmp);
        second_order = 0.5 * epsilon * tb.trace_DK(col);
    }
    s.tmp.noalias() = tb.D * s.p;
    return dg_dt + drift_at_x.dot(s.p) + second_order + 0.5 * s.p.dot(s.tmp);
}

}  // namespace sva
