#include "sva/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sva/error.hpp"

namespace sva {

DiffusionModel::DiffusionModel(VectorField drift, MatrixField drift_jacobian,
                               ContractedHessianField drift_hessian_contract, Matrix sigma)
    : drift_(std::move(drift)),
      jacobian_(std::move(drift_jacobian)),
      hessian_contract_(std::move(drift_hessian_contract)),
      sigma_(std::move(sigma)) {
    if (!drift_ || !jacobian_ || !hessian_contract_)
        throw ModelError("diffusion model: drift and its derivatives must be provided");
    if (sigma_.rows() < 1 || sigma_.cols() < 1)
        throw ModelError("diffusion model: sigma must be a non-empty d x m matrix");
    if (!sigma_.allFinite()) throw ModelError("diffusion model: sigma is not finite");
    cov_ = sigma_ * sigma_.transpose();
    const double smallest = min_eigenvalue(cov_);
    if (!(smallest > 0.0)) {
        std::ostringstream msg;
        msg << "diffusion model: D = sigma sigma^T is not positive definite (smallest eigenvalue "
            << smallest << ")";
        throw ModelError(msg.str());
    }
    lambda_max_ = max_eigenvalue(cov_);
}

Vector DiffusionModel::drift(const VectorCRef& x) const {
    Vector out(dim());
    drift_(x, out);
    return out;
}

Matrix DiffusionModel::drift_jacobian(const VectorCRef& x) const {
    Matrix out(dim(), dim());
    jacobian_(x, out);
    return out;
}

Matrix DiffusionModel::drift_hessian_contract(const VectorCRef& x, const VectorCRef& theta) const {
    Matrix out(dim(), dim());
    hessian_contract_(x, theta, out);
    return out;
}

Vector ObservableSpec::gradient(const VectorCRef& x) const {
    Vector out(x.size());
    grad_f(x, out);
    return out;
}

Matrix ObservableSpec::hessian(const VectorCRef& x) const {
    Matrix out(x.size(), x.size());
    hess_f(x, out);
    return out;
}

namespace {

constexpr double kRelTol = 1e-5;
constexpr double kAbsTol = 1e-8;

double step_for(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

double normalized_error(const MatrixCRef& fd, const MatrixCRef& exact) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < fd.cols(); ++j) {
        for (Eigen::Index i = 0; i < fd.rows(); ++i) {
            const double e = exact(i, j);
            const double err = std::abs(fd(i, j) - e) / (kRelTol * std::abs(e) + kAbsTol);
            worst = std::max(worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
        }
    }
    return worst;
}

}  // namespace

DerivativeCheck check_derivatives(const Problem& problem, const ProbeBox& box, int n_probes) {
    const int d = problem.dim();
    if (box.lower.size() != d || box.upper.size() != d)
        throw ConfigError("derivative check: probe box dimension mismatch");
    if (n_probes < 1) throw ConfigError("derivative check: need at least one probe");
    if (problem.observable.x0.size() != d)
        throw ModelError("observable: x0 dimension does not match the model");

    const auto& model = problem.model;
    const auto& obs = problem.observable;

    Vector theta(d);
    for (int k = 0; k < d; ++k) theta(k) = 1.0 - 0.5 * k / std::max(1, d);

    DerivativeCheck report;
    report.f_max = -std::numeric_limits<double>::infinity();
    Vector x(d), xp(d), xm(d), bp(d), bm(d), gp(d), gm(d);
    Matrix jac(d, d), jp(d, d), jm(d, d), hess(d, d), fd_jac(d, d), fd_hess(d, d);
    Vector grad(d), fd_grad(d);
    Matrix hb(d, d), fd_hb(d, d), hf(d, d), fd_hf(d, d);

    for (int p = 0; p < n_probes; ++p) {
        const double s = n_probes == 1 ? 0.5 : static_cast<double>(p) / (n_probes - 1);
        x = box.lower + s * (box.upper - box.lower);

        model.drift_jacobian(x, jac);
        model.drift_hessian_contract(x, theta, hb);
        obs.grad_f(x, grad);
        obs.hess_f(x, hf);
        report.f_max = std::max(report.f_max, obs.f(x));

        for (int j = 0; j < d; ++j) {
            const double h = step_for(x(j));
            xp = x;
            xm = x;
            xp(j) += h;
            xm(j) -= h;
            model.drift(xp, bp);
            model.drift(xm, bm);
            fd_jac.col(j) = (bp - bm) / (2 * h);
            model.drift_jacobian(xp, jp);
            model.drift_jacobian(xm, jm);
            fd_hb.col(j) = ((jp - jm) / (2 * h)).transpose() * theta;
            fd_grad(j) = (obs.f(xp) - obs.f(xm)) / (2 * h);
            obs.grad_f(xp, gp);
            obs.grad_f(xm, gm);
            fd_hf.col(j) = (gp - gm) / (2 * h);
        }
        report.drift_jacobian_error = std::max(report.drift_jacobian_error, normalized_error(fd_jac, jac));
        report.drift_hessian_error = std::max(report.drift_hessian_error, normalized_error(fd_hb, hb));
        report.grad_f_error = std::max(report.grad_f_error, normalized_error(fd_grad, grad));
        report.hess_f_error = std::max(report.hess_f_error, normalized_error(fd_hf, hf));
        const Matrix asym = hb - hb.transpose();
        report.hessian_asymmetry = std::max(report.hessian_asymmetry, normalized_error(asym, Matrix::Zero(d, d)));
    }
    report.ok = report.drift_jacobian_error <= 1.0 && report.drift_hessian_error <= 1.0 &&
                report.grad_f_error <= 1.0 && report.hess_f_error <= 1.0 &&
                report.hessian_asymmetry <= 1.0 && std::isfinite(report.f_max);
    return report;
}

void validate_derivatives(const Problem& problem, const ProbeBox& box, int n_probes) {
    const auto r = check_derivatives(problem, box, n_probes);
    if (r.ok) return;
    std::ostringstream msg;
    msg << "model '" << problem.name << "' failed derivative validation (normalized errors: "
        << "jacobian " << r.drift_jacobian_error << ", drift hessian " << r.drift_hessian_error
        << ", hessian asymmetry " << r.hessian_asymmetry << ", grad f " << r.grad_f_error
        << ", hess f " << r.hess_f_error << ", max f " << r.f_max << ")";
    throw ModelError(msg.str());
}

namespace {

ProbeBox box_around(const Vector& x0, double half_width) {
    return {x0.array() - half_width, x0.array() + half_width};
}

DiffusionModel linear_drift_1d(double rate) {
    return DiffusionModel(
        [rate](const VectorCRef& x, VectorRef out) { out(0) = -rate * x(0); },
        [rate](const VectorCRef&, MatrixRef out) { out(0, 0) = -rate; },
        [](const VectorCRef&, const VectorCRef&, MatrixRef out) { out.setZero(); },
        Matrix::Identity(1, 1));
}

}  // namespace

Problem make_ou_quartic() {
    ObservableSpec obs;
    obs.f = [](const VectorCRef& x) {
        const double y = x(0) - 2.0;
        return -0.25 * y * y * y * y;
    };
    obs.grad_f = [](const VectorCRef& x, VectorRef out) {
        const double y = x(0) - 2.0;
        out(0) = -y * y * y;
    };
    obs.hess_f = [](const VectorCRef& x, MatrixRef out) {
        const double y = x(0) - 2.0;
        out(0, 0) = -3.0 * y * y;
    };
    obs.x0 = Vector::Constant(1, -1.0);
    obs.horizon = 5.0;
    Problem problem{"ou_quartic", linear_drift_1d(1.0), std::move(obs)};
    validate_derivatives(problem, box_around(problem.observable.x0, 4.0));
    return problem;
}

Problem make_lq_case(double a, double q) {
    if (!std::isfinite(a)) throw ConfigError("lq case: a must be finite");
    if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("lq case: q must be >= 0");
    ObservableSpec obs;
    obs.f = [q](const VectorCRef& x) {
        const double y = x(0) - kLqCenter;
        return -0.5 * q * y * y;
    };
    obs.grad_f = [q](const VectorCRef& x, VectorRef out) { out(0) = -q * (x(0) - kLqCenter); };
    obs.hess_f = [q](const VectorCRef&, MatrixRef out) { out(0, 0) = -q; };
    obs.x0 = Vector::Constant(1, -1.0);
    obs.horizon = 5.0;
    Problem problem{"lq", linear_drift_1d(a), std::move(obs)};
    validate_derivatives(problem, box_around(problem.observable.x0, 4.0));
    return problem;
}

}  // namespace sva
