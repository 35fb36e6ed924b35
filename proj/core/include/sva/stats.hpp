#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sva {

/// Mergeable first and second exponential moments of log-domain samples w_i:
/// log sum exp(w_i) and log sum exp(2 w_i).
///
/// Internally the sums are kept relative to the running maximum, so no
/// exponential of a positive number is ever taken.
class LogMoments {
  public:
    void add(double w) noexcept;
    void merge(const LogMoments& other) noexcept;

    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] double max_w() const noexcept { return max_; }
    [[nodiscard]] double log_sum_w() const noexcept;
    [[nodiscard]] double log_sum_2w() const noexcept;
    /// log of mean(e^{2w}) / mean(e^w)^2.
    [[nodiscard]] double log_rho() const noexcept;

  private:
    std::size_t n_ = 0;
    double max_ = -std::numeric_limits<double>::infinity();
    double s1_ = 0.0;  // sum exp(w - max)
    double s2_ = 0.0;  // sum exp(2 (w - max))
};

/// Single pass accumulation. Throws ConfigError on an empty span.
[[nodiscard]] LogMoments accumulate(std::span<const double> log_samples);

struct EstimatorReport {
    double epsilon = 0.0;
    std::string control;
    double log_A_hat = 0.0;
    double Z_hat = 0.0;        ///< eps * log_A_hat
    double log_rho_hat = 0.0;
    double rho_hat = 1.0;
    double R_hat = 0.0;        ///< eps * log_rho_hat
    double rel_var = 0.0;      ///< rho_hat - 1
    double ci_lo = std::numeric_limits<double>::quiet_NaN();
    double ci_hi = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

/// Self-normalized report: numerator and denominator of rho come from the
/// same sample. Throws ConfigError if n < 2.
[[nodiscard]] EstimatorReport report(const LogMoments& moments, double epsilon,
                                     std::string control, std::uint64_t seed);

/// Two-run report: the second moment comes from the tilted sample and the
/// squared first moment from an independent unbiased sample.
[[nodiscard]] EstimatorReport report_two_run(const LogMoments& tilted,
                                             const LogMoments& unbiased, double epsilon,
                                             std::string control, std::uint64_t seed);

/// Percentile bootstrap (2.5%, 97.5% by default) of R_hat = eps log rho_hat.
/// Throws ConfigError if n_resample < 100 or fewer than 2 samples.
[[nodiscard]] std::pair<double, double> bootstrap_ci(std::span<const double> log_samples,
                                                     double epsilon, int n_resample,
                                                     std::uint64_t seed, double level = 0.95);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_used = 0;
};

/// Ordinary least squares y = intercept + slope x. Throws ConfigError with
/// fewer than two points or constant x.
[[nodiscard]] LinearFit least_squares(std::span<const double> x, std::span<const double> y);

struct DecayFit {
    LinearFit fit;                  ///< of log R_hat against log eps
    std::vector<double> excluded;  ///< epsilons dropped because R_hat <= 0
};

/// Empirical log-efficiency order k from reports of one control. Needs at
/// least four distinct epsilons and at least two positive R_hat.
[[nodiscard]] DecayFit fit_decay_order(std::span<const EstimatorReport> reports);

}  // namespace sva
