#include "sva/stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sva/error.hpp"
#include "sva/rng.hpp"

namespace sva {

void LogMoments::add(double w) noexcept {
    ++n_;
    if (w == -std::numeric_limits<double>::infinity()) return;
    if (w > max_) {
        const double shift = std::exp(max_ - w);  // 0 when max_ is -inf
        s1_ *= shift;
        s2_ *= shift * shift;
        max_ = w;
    }
    const double e = std::exp(w - max_);
    s1_ += e;
    s2_ += e * e;
}

void LogMoments::merge(const LogMoments& other) noexcept {
    if (other.n_ == 0) return;
    if (other.max_ > max_) {
        const double shift = std::exp(max_ - other.max_);
        s1_ = s1_ * shift + other.s1_;
        s2_ = s2_ * shift * shift + other.s2_;
        max_ = other.max_;
    } else if (other.s1_ > 0.0) {
        const double shift = std::exp(other.max_ - max_);
        s1_ += other.s1_ * shift;
        s2_ += other.s2_ * shift * shift;
    }
    n_ += other.n_;
}

double LogMoments::log_sum_w() const noexcept {
    if (s1_ <= 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(s1_);
}

double LogMoments::log_sum_2w() const noexcept {
    if (s2_ <= 0.0) return -std::numeric_limits<double>::infinity();
    return 2.0 * max_ + std::log(s2_);
}

double LogMoments::log_rho() const noexcept {
    // The common factor exp(max) cancels between the two moments.
    return std::log(s2_) + std::log(static_cast<double>(n_)) - 2.0 * std::log(s1_);
}

LogMoments accumulate(std::span<const double> log_samples) {
    if (log_samples.empty()) throw ConfigError("accumulate: empty sample");
    LogMoments m;
    for (double w : log_samples) m.add(w);
    return m;
}

namespace {

EstimatorReport finish(double log_A, double log_rho, double epsilon, std::string control,
                       std::size_t n, std::uint64_t seed) {
    EstimatorReport r;
    r.epsilon = epsilon;
    r.control = std::move(control);
    r.log_A_hat = log_A;
    r.Z_hat = epsilon * log_A;
    r.log_rho_hat = log_rho;
    r.rho_hat = std::exp(log_rho);
    r.R_hat = epsilon * log_rho;
    r.rel_var = std::expm1(log_rho);
    r.n = n;
    r.seed = seed;
    return r;
}

}  // namespace

EstimatorReport report(const LogMoments& moments, double epsilon, std::string control,
                       std::uint64_t seed) {
    if (moments.n() < 2) throw ConfigError("report: need at least two samples");
    if (!(epsilon > 0.0)) throw ConfigError("report: eps must be positive");
    if (!std::isfinite(moments.log_sum_w()))
        throw NumericalError("report: all samples have zero weight");
    const double log_n = std::log(static_cast<double>(moments.n()));
    return finish(moments.log_sum_w() - log_n, moments.log_rho(), epsilon, std::move(control),
                  moments.n(), seed);
}

EstimatorReport report_two_run(const LogMoments& tilted, const LogMoments& unbiased, double epsilon,
                               std::string control, std::uint64_t seed) {
    if (tilted.n() < 2 || unbiased.n() < 2) throw ConfigError("report: need at least two samples");
    if (!(epsilon > 0.0)) throw ConfigError("report: eps must be positive");
    const double log_m2 = tilted.log_sum_2w() - std::log(static_cast<double>(tilted.n()));
    const double log_a_ref = unbiased.log_sum_w() - std::log(static_cast<double>(unbiased.n()));
    const double log_a = tilted.log_sum_w() - std::log(static_cast<double>(tilted.n()));
    if (!std::isfinite(log_m2) || !std::isfinite(log_a_ref))
        throw NumericalError("report: all samples have zero weight");
    return finish(log_a, log_m2 - 2.0 * log_a_ref, epsilon, std::move(control), tilted.n(), seed);
}

std::pair<double, double> bootstrap_ci(std::span<const double> log_samples, double epsilon,
                                       int n_resample, std::uint64_t seed, double level) {
    if (n_resample < 100) throw ConfigError("bootstrap: need at least 100 resamples");
    if (log_samples.size() < 2) throw ConfigError("bootstrap: need at least two samples");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap: level must lie in (0, 1)");

    const std::size_t n = log_samples.size();
    const double top = *std::max_element(log_samples.begin(), log_samples.end());
    std::vector<double> scaled(n);
    for (std::size_t j = 0; j < n; ++j) scaled[j] = std::exp(log_samples[j] - top);
    const double log_n = std::log(static_cast<double>(n));

    std::vector<double> stats(static_cast<std::size_t>(n_resample));
    for (int r = 0; r < n_resample; ++r) {
        NormalStream rng(seed, static_cast<std::uint64_t>(r));
        std::vector<std::size_t> picks(n);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const auto idx = static_cast<std::size_t>(rng.next_uniform() * static_cast<double>(n)) % n;
            picks[j] = idx;
            s1 += scaled[idx];
            s2 += scaled[idx] * scaled[idx];
        }
        double log_rho = 0.0;
        if (s1 > 0.0 && s2 > 0.0) {
            log_rho = std::log(s2) + log_n - 2.0 * std::log(s1);
        } else {
            LogMoments m;  // every pick underflowed relative to the global max
            for (std::size_t idx : picks) m.add(log_samples[idx]);
            log_rho = m.log_rho();
        }
        stats[static_cast<std::size_t>(r)] = epsilon * log_rho;
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&stats](double p) {
        const double pos = p * static_cast<double>(stats.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, stats.size() - 1);
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * stats[lo] + w * stats[hi];
    };
    const double alpha = 1.0 - level;
    return {quantile(0.5 * alpha), quantile(1.0 - 0.5 * alpha)};
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ConfigError("least squares: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw ConfigError("least squares: need at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw ConfigError("least squares: x values are all equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.n_used = n;
    if (n > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            ssr += r * r;
        }
        fit.slope_stderr = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

DecayFit fit_decay_order(std::span<const EstimatorReport> reports) {
    if (reports.empty()) throw ConfigError("decay fit: no reports");
    std::set<double> distinct;
    for (const auto& r : reports) {
        if (r.control != reports.front().control)
            throw ConfigError("decay fit: reports mix controls");
        distinct.insert(r.epsilon);
    }
    if (distinct.size() < 4) throw ConfigError("decay fit: need at least four distinct epsilons");

    DecayFit out;
    std::vector<double> lx, ly;
    for (const auto& r : reports) {
        if (r.R_hat > 0.0 && std::isfinite(r.R_hat)) {
            lx.push_back(std::log(r.epsilon));
            ly.push_back(std::log(r.R_hat));
        } else {
            out.excluded.push_back(r.epsilon);
        }
    }
    if (lx.size() < 2)
        throw NumericalError("decay fit: fewer than two reports with positive R_hat");
    out.fit = least_squares(lx, ly);
    return out;
}

}  // namespace sva
