#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sva/error.hpp"
#include "sva/rng.hpp"
#include "sva/stats.hpp"

using namespace sva;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> gaussian_logs(std::size_t n, double mu, double s, std::uint64_t seed) {
    NormalStream rng(seed, 0);
    std::vector<double> w(n);
    for (double& v : w) v = mu + s * rng.next();
    return w;
}

// Direct evaluation without log-sum-exp, valid for moderate inputs.
double naive_log_rho(const std::vector<double>& w) {
    double s1 = 0.0, s2 = 0.0;
    for (double v : w) {
        s1 += std::exp(v);
        s2 += std::exp(2.0 * v);
    }
    return std::log(static_cast<double>(w.size()) * s2 / (s1 * s1));
}

EstimatorReport with_eps(double eps, const char* control) {
    EstimatorReport r;
    r.epsilon = eps;
    r.control = control;
    return r;
}

}  // namespace

TEST_CASE("log moments of small inputs") {
    const std::vector<double> zeros{0.0, 0.0};
    const auto m = accumulate(zeros);
    CHECK(m.log_sum_w() == doctest::Approx(std::log(2.0)));
    CHECK(m.log_sum_2w() == doctest::Approx(std::log(2.0)));
    CHECK(m.log_rho() == doctest::Approx(0.0));

    const std::vector<double> with_zero{1.5, kNegInf};
    const auto z = accumulate(with_zero);
    CHECK(z.n() == 2);
    CHECK(z.log_sum_w() == doctest::Approx(1.5));
    CHECK(z.log_rho() == doctest::Approx(std::log(2.0)));

    const std::vector<double> constant(50, -3.0);
    CHECK(accumulate(constant).log_rho() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_THROWS_AS((void)accumulate(std::vector<double>{}), ConfigError);
}

TEST_CASE("log moments match the direct sums and survive large exponents") {
    const auto w = gaussian_logs(5000, 0.3, 1.2, 4);
    const auto m = accumulate(w);
    CHECK(m.log_rho() == doctest::Approx(naive_log_rho(w)).epsilon(1e-12));

    std::vector<double> shifted(w);
    for (double& v : shifted) v += 2000.0;
    const auto big = accumulate(shifted);
    CHECK(std::isfinite(big.log_sum_w()));
    CHECK(big.log_sum_w() - 2000.0 == doctest::Approx(m.log_sum_w()).epsilon(1e-12));
    CHECK(big.log_rho() == doctest::Approx(m.log_rho()).epsilon(1e-10));
    // Cauchy-Schwarz: rho >= 1.
    CHECK(big.log_rho() >= 0.0);
}

TEST_CASE("merge equals accumulation of the concatenation") {
    const auto w = gaussian_logs(3001, -1.0, 2.0, 9);
    const auto all = accumulate(w);
    for (std::size_t cut : {std::size_t{1}, std::size_t{1000}, std::size_t{3000}}) {
        LogMoments left = accumulate(std::span<const double>(w).first(cut));
        const LogMoments right = accumulate(std::span<const double>(w).subspan(cut));
        left.merge(right);
        CHECK(left.n() == all.n());
        CHECK(left.log_sum_w() == doctest::Approx(all.log_sum_w()).epsilon(1e-12));
        CHECK(left.log_sum_2w() == doctest::Approx(all.log_sum_2w()).epsilon(1e-12));
    }
    LogMoments empty;
    empty.merge(all);
    CHECK(empty.log_rho() == doctest::Approx(all.log_rho()).epsilon(1e-12));
}

TEST_CASE("report on lognormal samples") {
    // log A = mu + s^2/2 and log rho = s^2 for exp(N(mu, s^2)).
    const double mu = 0.2, s = 0.5, eps = 0.25;
    const std::size_t n = 200000;
    const auto w = gaussian_logs(n, mu, s, 21);
    const auto r = report(accumulate(w), eps, "order1", 21);
    const double se_logA = std::sqrt(std::expm1(s * s) / static_cast<double>(n));
    CHECK(std::abs(r.log_A_hat - (mu + 0.5 * s * s)) <= 3.0 * se_logA);
    CHECK(r.Z_hat == doctest::Approx(eps * r.log_A_hat));
    CHECK(r.R_hat == doctest::Approx(eps * r.log_rho_hat));
    CHECK(r.rel_var == doctest::Approx(r.rho_hat - 1.0));
    CHECK(r.log_rho_hat == doctest::Approx(s * s).epsilon(0.05));
    CHECK(r.n == n);
    CHECK(r.seed == 21);
    CHECK(r.control == "order1");

    CHECK_THROWS_AS((void)report(accumulate(std::vector<double>{1.0}), eps, "x", 0), ConfigError);
    CHECK_THROWS_AS((void)report(accumulate(w), 0.0, "x", 0), ConfigError);
    CHECK_THROWS_AS((void)report(accumulate(std::vector<double>{kNegInf, kNegInf}), eps, "x", 0),
                    NumericalError);
}

TEST_CASE("two-run report uses the unbiased first moment") {
    const auto tilted = accumulate(gaussian_logs(1000, 0.0, 0.3, 1));
    const std::vector<double> ref{std::log(2.0), std::log(2.0)};
    const auto r = report_two_run(tilted, accumulate(ref), 0.5, "order2", 1);
    const double log_m2 = tilted.log_sum_2w() - std::log(1000.0);
    CHECK(r.log_rho_hat == doctest::Approx(log_m2 - 2.0 * std::log(2.0)));
    CHECK(r.log_A_hat == doctest::Approx(tilted.log_sum_w() - std::log(1000.0)));
    // Identical samples reproduce the self-normalized estimate.
    const auto same = report_two_run(tilted, tilted, 0.5, "order2", 1);
    CHECK(same.R_hat == doctest::Approx(report(tilted, 0.5, "order2", 1).R_hat));
}

TEST_CASE("bootstrap interval") {
    const std::vector<double> equal(100, 0.7);
    const auto [lo0, hi0] = bootstrap_ci(equal, 0.5, 200, 3);
    CHECK(lo0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hi0 == doctest::Approx(0.0).epsilon(1e-12));

    const auto w = gaussian_logs(2000, 0.0, 0.6, 5);
    const auto a = bootstrap_ci(w, 0.5, 300, 77);
    const auto b = bootstrap_ci(w, 0.5, 300, 77);
    CHECK(a == b);
    CHECK(a.first < a.second);

    const auto wide = bootstrap_ci(gaussian_logs(1000, 0.0, 0.4, 6), 0.5, 400, 1);
    const auto narrow = bootstrap_ci(gaussian_logs(16000, 0.0, 0.4, 7), 0.5, 400, 1);
    const double ratio = (wide.second - wide.first) / (narrow.second - narrow.first);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.3));

    CHECK_THROWS_AS((void)bootstrap_ci(w, 0.5, 99, 1), ConfigError);
    CHECK_THROWS_AS((void)bootstrap_ci(std::vector<double>{1.0}, 0.5, 200, 1), ConfigError);
    CHECK_THROWS_AS((void)bootstrap_ci(w, 0.5, 200, 1, 1.0), ConfigError);
}

TEST_CASE("bootstrap coverage on lognormal samples") {
    // The exact value is R = eps s^2.
    const double s = 0.4, eps = 0.5;
    int covered = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        const auto w = gaussian_logs(2000, -0.5, s, 1000 + rep);
        const auto [lo, hi] = bootstrap_ci(w, eps, 200, rep);
        if (lo <= eps * s * s && eps * s * s <= hi) ++covered;
    }
    CHECK(covered >= 90);
}

TEST_CASE("least squares") {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
    const auto fit = least_squares(x, y);
    CHECK(fit.slope == doctest::Approx(2.0));
    CHECK(fit.intercept == doctest::Approx(1.0));
    CHECK(fit.slope_stderr == doctest::Approx(0.0));
    CHECK(fit.n_used == 4);

    const std::vector<double> noisy{1.1, 2.9, 5.2, 6.8};
    CHECK(least_squares(x, noisy).slope_stderr > 0.0);
    CHECK(std::isnan(least_squares(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 1.0}).slope_stderr));
    CHECK_THROWS_AS((void)least_squares(x, std::vector<double>{1.0}), ConfigError);
    CHECK_THROWS_AS((void)least_squares(std::vector<double>{2.0, 2.0}, std::vector<double>{0.0, 1.0}),
                    ConfigError);
}

TEST_CASE("decay order fit") {
    std::vector<EstimatorReport> reports;
    for (double eps : {0.5, 0.25, 0.125, 0.0625}) {
        auto r = with_eps(eps, "order2");
        r.R_hat = 0.3 * eps * eps * eps;
        reports.push_back(r);
    }
    const auto fit = fit_decay_order(reports);
    CHECK(fit.fit.slope == doctest::Approx(3.0));
    CHECK(std::exp(fit.fit.intercept) == doctest::Approx(0.3));
    CHECK(fit.excluded.empty());

    reports[3].R_hat = -1e-4;
    const auto partial = fit_decay_order(reports);
    CHECK(partial.fit.n_used == 3);
    CHECK(partial.fit.slope == doctest::Approx(3.0));
    REQUIRE(partial.excluded.size() == 1);
    CHECK(partial.excluded[0] == 0.0625);

    reports[2].R_hat = 0.0;
    reports[1].R_hat = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)fit_decay_order(reports), NumericalError);

    CHECK_THROWS_AS((void)fit_decay_order(std::span<const EstimatorReport>(reports).first(3)), ConfigError);
    reports[1].control = "order1";
    CHECK_THROWS_AS((void)fit_decay_order(reports), ConfigError);
    CHECK_THROWS_AS((void)fit_decay_order(std::span<const EstimatorReport>{}), ConfigError);
}
