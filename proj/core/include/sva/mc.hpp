#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sva/bias.hpp"
#include "sva/model.hpp"
#include "sva/rng.hpp"
#include "sva/time_grid.hpp"

namespace sva {

/// One realization of the tilted estimator.
struct TrajectorySample {
    double log_weight = 0.0;   ///< log of the Girsanov weight
    Vector terminal_x;
    double log_payoff = 0.0;   ///< f(X_T)/eps + log_weight
    std::optional<double> sup_deviation;  ///< max_i |X_i - phi_{t_i}|
    std::optional<double> residual;       ///< empirical residual Q^eps
    bool valid = true;                    ///< false if the state became non-finite
};

struct SimOptions {
    bool record_deviation = false;
    bool record_residual = false;
};

struct SimConfig {
    std::size_t n_traj = 1;
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    SimOptions options;
    /// Number of threads; 0 picks std::thread::hardware_concurrency().
    unsigned workers = 1;
    /// Mixed into the per-trajectory stream id. Equal salts give common
    /// random numbers across runs that share a seed.
    std::uint64_t stream_salt = 0;
    /// Fraction of invalid samples above which the batch aborts.
    double max_invalid_fraction = 1e-3;
};

/// Stream id used for trajectory `index`.
[[nodiscard]] std::uint64_t trajectory_stream_id(std::uint64_t salt, std::uint64_t index) noexcept;

/// Simulates one tilted path with Euler-Maruyama on the control's grid:
///   X_{i+1} = X_i + [b(X_i) + D grad g(t_i, X_i)] dt + sqrt(eps dt) sigma xi_i
///   log G  += -(1/sqrt eps) u_i.(sqrt(dt) xi_i) - |u_i|^2 dt / (2 eps),  u_i = sigma^T grad g
/// The same xi_i drives state and weight. Deviation tracking needs the
/// control to carry an instanton.
[[nodiscard]] TrajectorySample simulate_one(const Problem& problem, const BiasControl& control,
                                            double epsilon, NormalStream& rng,
                                            const SimOptions& options = {});

/// Results of a batch, stored column-wise and indexed by trajectory.
struct SampleBatch {
    std::vector<double> log_payoff;
    std::vector<double> log_weight;
    std::vector<double> sup_deviation;  ///< empty unless recorded
    std::vector<double> residual;       ///< empty unless recorded
    std::vector<std::uint8_t> valid;
    Matrix terminal_x;                  ///< d x n
    std::size_t n_invalid = 0;

    [[nodiscard]] std::size_t size() const noexcept { return log_payoff.size(); }
    [[nodiscard]] TrajectorySample sample(std::size_t i) const;
    /// log_payoff of valid samples, in trajectory order.
    [[nodiscard]] std::vector<double> valid_log_payoffs() const;
};

/// Simulates n_traj trajectories; trajectory i draws from
/// NormalStream(seed, trajectory_stream_id(salt, i)), so the result does not
/// depend on the number of workers. Throws ConfigError for n_traj = 0 and
/// NumericalError if more than max_invalid_fraction samples are invalid.
[[nodiscard]] SampleBatch simulate_batch(const Problem& problem, const BiasControl& control,
                                         const SimConfig& config);

/// Empirical log E[exp(2 Q)] over the recorded residuals, by log-sum-exp.
/// Throws ConfigError if k <= 0 or no residual is recorded.
[[nodiscard]] double residual_mgf_check(std::span<const double> residuals, double k);
[[nodiscard]] double residual_mgf_check(const SampleBatch& batch, double k);

}  // namespace sva
