// Acceptance checks for the estimator, the controls and the oracles.
// Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
// Usage: sva_acceptance [output_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sva/bias.hpp"
#include "sva/experiment.hpp"
#include "sva/mc.hpp"
#include "sva/odesolve.hpp"
#include "sva/oracle.hpp"
#include "sva/stats.hpp"

using namespace sva;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kOrder1SlopeLo = 0.7, kOrder1SlopeHi = 1.3;
constexpr double kOrder2SlopeLo = 1.6, kOrder2SlopeHi = 2.4;
constexpr double kUnbiasedRatioMax = 2.0;
constexpr double kSweepSecondsMax = 300.0;
constexpr double kLqSdMax = 0.05;
constexpr double kLqRMax = 5e-3;
constexpr double kCombinedSe = 3.0;
constexpr double kPdeSelfConvMax = 1e-3;
constexpr double kG1RatioLo = 1.5, kG1RatioHi = 2.8;
constexpr double kG2RatioLo = 3.0, kG2RatioHi = 5.5;
constexpr double kDeviationSlope = 0.5, kDeviationSlopeTol = 0.1;
constexpr double kResidualSpreadMax = 1.0;
constexpr double kOdeTol = 1e-6;

constexpr double kSweepDt = 5e-3;
constexpr std::size_t kDeskN = 100000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void check(int id, const std::string& title, const std::function<Outcome()>& body) {
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

double z_se(const EstimatorReport& r) {
    return r.epsilon * std::sqrt(std::max(0.0, r.rel_var) / static_cast<double>(r.n));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Sweep {
    ExperimentArtifacts art;
    double seconds = 0.0;
    std::map<std::string, std::map<double, const CellResult*>> cell;  // control -> eps -> cell
};

Sweep run_sweep(const fs::path& dir) {
    ExperimentConfig c;  // ou_quartic, eps {0.5, 0.25, 0.125, 0.0625}, all controls
    c.n_traj = kDeskN;
    c.dt = kSweepDt;
    c.output_dir = dir;
    c.record_deviation = true;
    c.timestamp = false;
    c.bootstrap_resamples = 200;
    c.pde_nx = 2001;
    Sweep s;
    const auto t0 = std::chrono::steady_clock::now();
    s.art = run_experiment(c);
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& cell : s.art.cells) s.cell[cell.report.control][cell.report.epsilon] = &cell;
    return s;
}

EstimatorReport simulate_report(const Problem& p, const BiasControl& g, double eps, std::size_t n,
                                std::uint64_t seed, std::uint64_t salt, SimOptions opts = {},
                                SampleBatch* keep = nullptr) {
    SimConfig cfg;
    cfg.n_traj = n;
    cfg.epsilon = eps;
    cfg.seed = seed;
    cfg.stream_salt = salt;
    cfg.workers = 0;
    cfg.options = opts;
    auto batch = simulate_batch(p, g, cfg);
    auto r = report(accumulate(batch.valid_log_payoffs()), eps, std::string(g.name()), seed);
    if (keep != nullptr) *keep = std::move(batch);
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(out);

    std::printf("running the desk-scale sweep (n = %zu, dt = %g) ...\n", kDeskN, kSweepDt);
    std::fflush(stdout);
    Sweep sweep;
    std::string sweep_error;
    try {
        sweep = run_sweep(out / "sweep");
    } catch (const std::exception& e) {
        sweep_error = e.what();
    }
    auto need_sweep = [&]() {
        if (!sweep_error.empty()) throw std::runtime_error("sweep failed: " + sweep_error);
    };

    check(1, "decay orders of R(eps)", [&]() -> Outcome {
        need_sweep();
        const double s1 = sweep.art.fits.at(ControlKind::Order1).fit.slope;
        const double s2 = sweep.art.fits.at(ControlKind::Order2).fit.slope;
        double rmin = INFINITY, rmax = -INFINITY;
        for (const auto& [eps, cell] : sweep.cell.at("none")) {
            rmin = std::min(rmin, cell->report.R_hat);
            rmax = std::max(rmax, cell->report.R_hat);
        }
        const double ratio = rmax / rmin;
        const bool ok = within(s1, kOrder1SlopeLo, kOrder1SlopeHi) && within(s2, kOrder2SlopeLo, kOrder2SlopeHi) &&
                        rmin > 0.0 && ratio < kUnbiasedRatioMax && sweep.seconds < kSweepSecondsMax;
        return {ok, "order1 slope " + fmt(s1) + " in [0.7, 1.3], order2 slope " + fmt(s2) +
                        " in [1.6, 2.4], unbiased R max/min " + fmt(ratio) + " < 2, sweep " +
                        fmt(sweep.seconds) + " s < 300 s"};
    });

    check(2, "ordering of efficiencies", [&]() -> Outcome {
        need_sweep();
        bool ok = true;
        std::ostringstream d;
        for (const auto& [eps, none] : sweep.cell.at("none")) {
            const auto& r0 = none->report;
            const auto& r1 = sweep.cell.at("order1").at(eps)->report;
            const auto& r2 = sweep.cell.at("order2").at(eps)->report;
            bool here = r0.R_hat > r1.R_hat && r1.R_hat > r2.R_hat;
            if (eps <= 0.25) here = here && r1.ci_hi < r0.ci_lo && r2.ci_hi < r1.ci_lo;
            ok = ok && here;
            d << "eps " << eps << ": " << fmt(r0.R_hat) << " > " << fmt(r1.R_hat) << " > " << fmt(r2.R_hat)
              << (here ? "" : " (violated)") << "; ";
        }
        return {ok, d.str()};
    });

    check(3, "linear-quadratic zero variance", [&]() -> Outcome {
        const Problem p = make_lq_case(1.0, 1.0);
        const double eps = 0.1;
        const TimeGrid grid(5.0, 1e-3);
        const auto inst = solve_instanton(p, grid);
        const auto g = BiasControl::order2(p, inst, solve_riccati(p, inst), eps);
        SampleBatch batch;
        const auto r = simulate_report(p, g, eps, 10000, 3, 0, {}, &batch);
        const auto& w = batch.log_payoff;
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= static_cast<double>(w.size());
        double var = 0.0;
        for (double v : w) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(w.size() - 1));
        return {sd <= kLqSdMax && r.R_hat <= kLqRMax,
                "sd(log_payoff) " + fmt(sd) + " <= 0.05, R_hat " + fmt(r.R_hat) + " <= 5e-3"};
    });

    check(4, "Monte Carlo against the PDE oracle", [&]() -> Outcome {
        need_sweep();
        const auto& r = sweep.cell.at("none").at(0.5)->report;
        const Problem p = make_ou_quartic();
        // Same box as the sweep oracle, with half the spacing.
        const double z2001 = sweep.art.oracle_z.at(0.5);
        const auto inst = solve_instanton(p, TimeGrid(5.0, kSweepDt));
        const double phi_lo = inst.phi.minCoeff(), phi_hi = inst.phi.maxCoeff();
        const auto g2001 = default_pde_grid(p, phi_lo, phi_hi, 3.0, 2001);
        const auto g4001 = default_pde_grid(p, phi_lo, phi_hi, 3.0, 4001);
        const double z_a = solve_feynman_kac_1d(p, 0.5, g2001).z_eps;
        const double z_b = solve_feynman_kac_1d(p, 0.5, g4001).z_eps;
        const double self = std::abs(z_a - z_b);
        const double se = z_se(r);
        const double dev = std::abs(r.Z_hat - z2001);
        const bool ok = dev <= kCombinedSe * std::hypot(se, self) && self <= kPdeSelfConvMax &&
                        std::abs(z_a - z2001) < 1e-12;
        return {ok, "Z_MC " + fmt(r.Z_hat) + " +- " + fmt(se) + ", Z_PDE " + fmt(z2001) + ", |diff| " +
                        fmt(dev) + " <= " + fmt(kCombinedSe * std::hypot(se, self)) +
                        "; self-convergence 2001 vs 4001 nodes " + fmt(self) + " <= 1e-3"};
    });

    check(5, "free-energy consistency of the predictors", [&]() -> Outcome {
        ExperimentConfig c;
        c.epsilon_list = {0.25, 0.125};
        c.controls = {ControlKind::Order1};
        c.n_traj = 100;
        c.dt = kSweepDt;
        c.pde_nx = 2001;
        c.workers = 0;
        const auto rep = validate_against_oracle(c);
        const auto& row = rep.rows.at(1);
        const bool ok = within(row.g1_ratio, kG1RatioLo, kG1RatioHi) && within(row.g2_ratio, kG2RatioLo, kG2RatioHi);
        return {ok, "g1 error " + fmt(rep.rows[0].g1_error) + " -> " + fmt(row.g1_error) + ", ratio " +
                        fmt(row.g1_ratio) + " in [1.5, 2.8]; g2 error " + fmt(rep.rows[0].g2_error) + " -> " +
                        fmt(row.g2_error) + ", ratio " + fmt(row.g2_ratio) + " in [3.0, 5.5]"};
    });

    check(6, "deviation from the instanton", [&]() -> Outcome {
        need_sweep();
        std::vector<double> lx, ly;
        std::ostringstream d;
        for (const auto& [eps, cell] : sweep.cell.at("order1")) {
            lx.push_back(std::log(eps));
            ly.push_back(std::log(cell->median_sup_deviation));
            d << "eps " << eps << ": " << fmt(cell->median_sup_deviation) << "; ";
        }
        const double slope = least_squares(lx, ly).slope;
        return {std::abs(slope - kDeviationSlope) <= kDeviationSlopeTol,
                "order1 slope " + fmt(slope) + " in [0.4, 0.6]; median sup deviation " + d.str()};
    });

    check(7, "residual moment bound", [&]() -> Outcome {
        const Problem p = make_ou_quartic();
        const auto inst = solve_instanton(p, TimeGrid(5.0, kSweepDt));
        const auto g = BiasControl::order1(p, inst);
        SimOptions opts;
        opts.record_residual = true;
        double lo = INFINITY, hi = -INFINITY;
        std::ostringstream d;
        for (double eps : {0.5, 0.25, 0.125}) {
            SampleBatch batch;
            (void)simulate_report(p, g, eps, 20000, 7, 0, opts, &batch);
            const double m = residual_mgf_check(batch, 1.0);
            lo = std::min(lo, m);
            hi = std::max(hi, m);
            d << "eps " << eps << ": " << fmt(m) << "; ";
        }
        return {hi - lo <= kResidualSpreadMax,
                "log E[exp(2Q)] " + d.str() + "spread " + fmt(hi - lo) + " <= 1"};
    });

    check(8, "unbiasedness of the tilted estimators", [&]() -> Outcome {
        const Problem p = make_ou_quartic();
        const double eps = 0.5;
        const auto set = ControlSet::build(p, TimeGrid(5.0, kSweepDt), InstantonOptions{}, RiccatiScheme::RK4);
        // The reference draws from streams disjoint from the tilted runs.
        const auto ref = simulate_report(p, set.make(p, ControlKind::Zero, eps), eps, kDeskN, 8, 0x5eed);
        bool ok = true;
        std::ostringstream d;
        d << "unbiased Z " << fmt(ref.Z_hat) << " +- " << fmt(z_se(ref)) << "; ";
        for (ControlKind k : {ControlKind::Zero, ControlKind::Order1, ControlKind::Order2}) {
            const auto r = simulate_report(p, set.make(p, k, eps), eps, kDeskN, 8, 0);
            const double bound = kCombinedSe * std::hypot(z_se(r), z_se(ref));
            const bool here = std::abs(r.Z_hat - ref.Z_hat) <= bound;
            ok = ok && here;
            d << control_name(k) << " " << fmt(r.Z_hat) << " +- " << fmt(z_se(r)) << " (|diff| "
              << fmt(std::abs(r.Z_hat - ref.Z_hat)) << " <= " << fmt(bound) << "); ";
        }
        return {ok, d.str()};
    });

    check(9, "independence of the worker count", [&]() -> Outcome {
        ExperimentConfig c;
        c.n_traj = 10000;
        c.dt = kSweepDt;
        c.timestamp = false;
        c.oracle = false;
        c.workers = 1;
        c.output_dir = out / "workers1";
        (void)run_experiment(c);
        c.workers = 8;
        c.output_dir = out / "workers8";
        (void)run_experiment(c);
        const std::string a = slurp(out / "workers1" / "efficiency.csv");
        const std::string b = slurp(out / "workers8" / "efficiency.csv");
        return {!a.empty() && a == b, a == b ? "efficiency.csv identical for 1 and 8 workers"
                                             : "efficiency.csv differs between 1 and 8 workers"};
    });

    check(10, "instanton and Riccati oracles", [&]() -> Outcome {
        const double a = 1.0, q = 1.0, c = kLqCenter, T = 5.0, x0 = -1.0;
        const Problem p = make_lq_case(a, q);
        const TimeGrid grid(T, 1e-3);
        const auto inst = solve_instanton(p, grid);
        const auto ric = solve_riccati(p, inst);
        // Linear boundary-value problem phi' = -a phi + theta, theta' = a theta,
        // theta_T = -q (phi_T - c), solved in closed form.
        const double gain = (1.0 - std::exp(-2.0 * a * T)) / (2.0 * a);
        const double theta_T = -q * (x0 * std::exp(-a * T) - c) / (1.0 + q * gain);
        const auto lq = lq_solution(a, q, c, T, 0.1, x0);
        double e_phi = 0.0, e_theta = 0.0, e_k = 0.0;
        for (std::size_t i = 0; i <= grid.n_steps(); ++i) {
            const double t = grid.time(i);
            const double theta = theta_T * std::exp(-a * (T - t));
            const double phi = x0 * std::exp(-a * t) + theta_T * std::exp(-a * (t + T)) * std::expm1(2.0 * a * t) / (2.0 * a);
            e_phi = std::max(e_phi, std::abs(inst.phi(0, static_cast<Eigen::Index>(i)) - phi));
            e_theta = std::max(e_theta, std::abs(inst.theta(0, static_cast<Eigen::Index>(i)) - theta));
            e_k = std::max(e_k, std::abs(ric.K[i](0, 0) - lq.k(t)));
        }
        const bool ok = inst.converged && e_phi <= kOdeTol && e_theta <= kOdeTol && e_k <= kOdeTol;
        return {ok, "sup error phi " + fmt(e_phi) + ", theta " + fmt(e_theta) + ", K " + fmt(e_k) + " <= 1e-6"};
    });

    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
