#pragma once

#include <functional>
#include <string>

#include "sva/linalg.hpp"

namespace sva {

using ScalarField = std::function<double(const VectorCRef& x)>;
using VectorField = std::function<void(const VectorCRef& x, VectorRef out)>;
using MatrixField = std::function<void(const VectorCRef& x, MatrixRef out)>;
/// (x, theta) -> sum_k theta_k * Hess(b_k)(x), a symmetric d x d matrix.
using ContractedHessianField =
    std::function<void(const VectorCRef& x, const VectorCRef& theta, MatrixRef out)>;

/// Additive-noise diffusion dX = b(X) dt + sqrt(eps) sigma dB.
///
/// Immutable after construction. The constructor checks shapes and that
/// D = sigma sigma^T is positive definite.
class DiffusionModel {
  public:
    DiffusionModel(VectorField drift, MatrixField drift_jacobian,
                   ContractedHessianField drift_hessian_contract, Matrix sigma);

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(sigma_.rows()); }
    [[nodiscard]] int noise_dim() const noexcept { return static_cast<int>(sigma_.cols()); }
    [[nodiscard]] const Matrix& sigma() const noexcept { return sigma_; }
    /// D = sigma sigma^T.
    [[nodiscard]] const Matrix& cov() const noexcept { return cov_; }
    /// Largest eigenvalue of D.
    [[nodiscard]] double lambda_max() const noexcept { return lambda_max_; }

    void drift(const VectorCRef& x, VectorRef out) const { drift_(x, out); }
    void drift_jacobian(const VectorCRef& x, MatrixRef out) const { jacobian_(x, out); }
    void drift_hessian_contract(const VectorCRef& x, const VectorCRef& theta,
                                MatrixRef out) const {
        hessian_contract_(x, theta, out);
    }

    // Allocating conveniences for non-hot code paths.
    [[nodiscard]] Vector drift(const VectorCRef& x) const;
    [[nodiscard]] Matrix drift_jacobian(const VectorCRef& x) const;
    [[nodiscard]] Matrix drift_hessian_contract(const VectorCRef& x,
                                                const VectorCRef& theta) const;

  private:
    VectorField drift_;
    MatrixField jacobian_;
    ContractedHessianField hessian_contract_;
    Matrix sigma_;
    Matrix cov_;
    double lambda_max_;
};

/// Terminal observable f, initial point and horizon of the expectation
/// E[exp(f(X_T)/eps)].
struct ObservableSpec {
    ScalarField f;
    VectorField grad_f;
    MatrixField hess_f;
    Vector x0;
    double horizon = 1.0;

    [[nodiscard]] double value(const VectorCRef& x) const { return f(x); }
    [[nodiscard]] Vector gradient(const VectorCRef& x) const;
    [[nodiscard]] Matrix hessian(const VectorCRef& x) const;
};

/// A model together with its observable. The noise level eps is not part of
/// the problem: every routine that depends on it takes it explicitly.
struct Problem {
    std::string name;
    DiffusionModel model;
    ObservableSpec observable;

    [[nodiscard]] int dim() const noexcept { return model.dim(); }
};

/// Axis-aligned box used for derivative and condition probing.
struct ProbeBox {
    Vector lower;
    Vector upper;
};

struct DerivativeCheck {
    double drift_jacobian_error = 0.0;
    double drift_hessian_error = 0.0;
    double hessian_asymmetry = 0.0;
    double grad_f_error = 0.0;
    double hess_f_error = 0.0;
    double f_max = 0.0;  ///< largest f over the probes
    bool ok = true;
};

/// Compares the analytic derivatives of the problem with central finite
/// differences at n_probes uniformly spaced points on the diagonal of the box.
/// Errors are normalized as |fd - exact| / (1e-5 |exact| + 1e-8), so a value
/// <= 1 passes.
[[nodiscard]] DerivativeCheck check_derivatives(const Problem& problem, const ProbeBox& box,
                                                int n_probes = 20);

/// Runs check_derivatives and throws ModelError on failure.
void validate_derivatives(const Problem& problem, const ProbeBox& box, int n_probes = 20);

/// Ornstein-Uhlenbeck process b(x) = -x, sigma = 1, with the quartic
/// observable f(x) = -(x-2)^4/4, x0 = -1, T = 5.
[[nodiscard]] Problem make_ou_quartic();

/// Linear-quadratic case b(x) = -a x, f(x) = -q (x-c)^2 / 2 with c = 2,
/// x0 = -1, T = 5, sigma = 1. Throws ConfigError if q < 0.
[[nodiscard]] Problem make_lq_case(double a, double q);

inline constexpr double kLqCenter = 2.0;

}  // namespace sva
