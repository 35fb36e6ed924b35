#include "sva/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <optional>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "sva/error.hpp"
#include "sva/oracle.hpp"

namespace sva {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line) {
    std::ostringstream msg;
    msg << "config line " << line << ": invalid value '" << value << "' for " << key;
    throw ConfigError(msg.str());
}

double to_double(const std::string& key, const std::string& value, int line) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(key, value, line);
    return out;
}

template <class Int>
Int to_integer(const std::string& key, const std::string& value, int line) {
    // Accept plain integers and exact scientific notation such as 1e5.
    Int out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec == std::errc() && ptr == end) return out;
    const double d = to_double(key, value, line);
    if (d < 0.0 || d != std::floor(d) || d > 9.0e15) bad_value(key, value, line);
    return static_cast<Int>(d);
}

bool to_bool(const std::string& key, const std::string& value, int line) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value, line);
}

// Shortest representation that reads back to the same double.
std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

std::uint64_t eps_bits(double eps) {
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(eps));
    std::memcpy(&bits, &eps, sizeof(bits));
    return bits;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    return out;
}

void write_timestamp(std::ostream& out) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    out << "# generated " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
}

PdeGrid oracle_grid(const Problem& problem, const InstantonPath& instanton, int n_x) {
    const double lo = instanton.phi.row(0).minCoeff();
    const double hi = instanton.phi.row(0).maxCoeff();
    return default_pde_grid(problem, lo, hi, 3.0, n_x);
}

// Standard error of Z = eps log A from the relative variance rho - 1.
double z_stderr(double epsilon, double log_rho, std::size_t n) {
    return epsilon * std::sqrt(std::max(0.0, std::expm1(log_rho)) / static_cast<double>(n));
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig config;
    if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0')
        config.output_dir = env;

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << "config line " << line_no << ": expected key = value";
            throw ConfigError(msg.str());
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));

        if (key == "model") {
            config.model_name = value;
        } else if (key == "epsilon_list") {
            config.epsilon_list.clear();
            for (const auto& item : split_list(value))
                config.epsilon_list.push_back(to_double(key, item, line_no));
        } else if (key == "controls") {
            config.controls.clear();
            for (const auto& item : split_list(value)) config.controls.push_back(parse_control_kind(item));
        } else if (key == "n_traj") {
            config.n_traj = to_integer<std::size_t>(key, value, line_no);
        } else if (key == "dt") {
            config.dt = to_double(key, value, line_no);
        } else if (key == "seed") {
            config.seed = to_integer<std::uint64_t>(key, value, line_no);
        } else if (key == "output_dir") {
            if (value.empty()) bad_value(key, value, line_no);
            config.output_dir = value;
        } else if (key == "record_deviation") {
            config.record_deviation = to_bool(key, value, line_no);
        } else if (key == "record_residual") {
            config.record_residual = to_bool(key, value, line_no);
        } else if (key == "two_run_rho") {
            config.two_run_rho = to_bool(key, value, line_no);
        } else if (key == "dump_samples") {
            config.dump_samples = to_bool(key, value, line_no);
        } else if (key == "common_random_numbers") {
            config.common_random_numbers = to_bool(key, value, line_no);
        } else if (key == "timestamp") {
            config.timestamp = to_bool(key, value, line_no);
        } else if (key == "oracle") {
            config.oracle = to_bool(key, value, line_no);
        } else if (key == "workers") {
            config.workers = to_integer<unsigned>(key, value, line_no);
        } else if (key == "bootstrap_resamples") {
            config.bootstrap_resamples = to_integer<int>(key, value, line_no);
        } else if (key == "lq_a") {
            config.lq_a = to_double(key, value, line_no);
        } else if (key == "lq_q") {
            config.lq_q = to_double(key, value, line_no);
        } else if (key == "instanton_relax") {
            config.instanton.relax = to_double(key, value, line_no);
        } else if (key == "instanton_max_iter") {
            config.instanton.max_iter = to_integer<int>(key, value, line_no);
        } else if (key == "instanton_tol") {
            config.instanton.tol = to_double(key, value, line_no);
        } else if (key == "riccati_scheme") {
            if (value == "rk4") config.riccati_scheme = RiccatiScheme::RK4;
            else if (value == "euler") config.riccati_scheme = RiccatiScheme::Euler;
            else bad_value(key, value, line_no);
        } else if (key == "pde_nx") {
            config.pde_nx = to_integer<int>(key, value, line_no);
        } else {
            std::ostringstream msg;
            msg << "config line " << line_no << ": unknown key '" << key << "'";
            throw ConfigError(msg.str());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse_config(in);
}

void validate_config(const ExperimentConfig& config, const Problem& problem) {
    if (config.epsilon_list.empty()) throw ConfigError("config: epsilon_list is empty");
    for (double eps : config.epsilon_list)
        if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("config: epsilons must be positive");
    auto sorted = config.epsilon_list;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("config: epsilons must be distinct");
    if (config.controls.empty()) throw ConfigError("config: no control selected");
    for (std::size_t i = 0; i < config.controls.size(); ++i) {
        if (config.controls[i] == ControlKind::Custom)
            throw ConfigError("config: custom controls are not available from a config file");
        for (std::size_t j = 0; j < i; ++j)
            if (config.controls[j] == config.controls[i]) throw ConfigError("config: duplicate control");
    }
    if (config.n_traj < 1) throw ConfigError("config: n_traj must be at least 1");
    if (!(config.dt > 0.0)) throw ConfigError("config: dt must be positive");
    [[maybe_unused]] const TimeGrid grid(problem.observable.horizon, config.dt);
    if (config.bootstrap_resamples != 0 && config.bootstrap_resamples < 100)
        throw ConfigError("config: bootstrap_resamples must be 0 or at least 100");
    if (config.pde_nx < 3) throw ConfigError("config: pde_nx must be at least 3");
    if (config.output_dir.empty()) throw ConfigError("config: output_dir is empty");
}

Problem make_problem(const std::string& name, double lq_a, double lq_q) {
    if (name == "ou_quartic") return make_ou_quartic();
    if (name == "lq") return make_lq_case(lq_a, lq_q);
    throw ConfigError("unknown model '" + name + "' (expected ou_quartic or lq)");
}

Problem make_problem(const ExperimentConfig& config) {
    return make_problem(config.model_name, config.lq_a, config.lq_q);
}

ControlSet ControlSet::build(const Problem& problem, const TimeGrid& grid,
                             const InstantonOptions& options, RiccatiScheme scheme) {
    InstantonPath instanton = solve_instanton(problem, grid, options);
    if (!instanton.converged) {
        std::ostringstream msg;
        msg << "instanton did not converge after " << instanton.iterations << " sweeps (last update "
            << instanton.final_residual << ", tol " << options.tol << ")";
        throw InstantonDivergence(msg.str(), instanton.iterations);
    }
    RiccatiPath riccati = solve_riccati(problem, instanton, scheme);
    return ControlSet{std::move(instanton), std::move(riccati)};
}

BiasControl ControlSet::make(const Problem& problem, ControlKind kind, double epsilon) const {
    switch (kind) {
        case ControlKind::Zero: return BiasControl::zero(problem, instanton.grid);
        case ControlKind::Order1: return BiasControl::order1(problem, instanton);
        case ControlKind::Order2: return BiasControl::order2(problem, instanton, riccati, epsilon);
        case ControlKind::Custom: break;
    }
    throw ConfigError("control set: custom controls must be built directly");
}

ExperimentArtifacts run_experiment(const ExperimentConfig& config) {
    const Problem problem = make_problem(config);
    validate_config(config, problem);
    const TimeGrid grid(problem.observable.horizon, config.dt);

    ExperimentArtifacts art;
    std::filesystem::create_directories(config.output_dir);
    art.instanton_csv = config.output_dir / "instanton.csv";
    art.efficiency_csv = config.output_dir / "efficiency.csv";
    art.summary_txt = config.output_dir / "summary.txt";

    InstantonPath instanton = solve_instanton(problem, grid, config.instanton);
    if (!instanton.converged) {
        auto out = open_output(art.instanton_csv);
        write_instanton_csv(out, instanton, nullptr);
        std::ostringstream msg;
        msg << "instanton did not converge after " << instanton.iterations << " sweeps (last update "
            << instanton.final_residual << ", tol " << config.instanton.tol
            << "); partial path written to " << art.instanton_csv.string();
        throw InstantonDivergence(msg.str(), instanton.iterations);
    }
    RiccatiPath riccati = solve_riccati(problem, instanton, config.riccati_scheme);
    const ControlSet set{std::move(instanton), std::move(riccati)};
    {
        auto out = open_output(art.instanton_csv);
        write_instanton_csv(out, set.instanton, &set.riccati);
    }

    auto eff = open_output(art.efficiency_csv);
    if (config.timestamp) write_timestamp(eff);
    write_efficiency_header(eff);

    for (double eps : config.epsilon_list) {
        const std::uint64_t cell_seed = derive_seed(config.seed, eps_bits(eps));
        std::optional<LogMoments> unbiased;
        if (config.two_run_rho) {
            SimConfig sim;
            sim.n_traj = config.n_traj;
            sim.epsilon = eps;
            sim.seed = derive_seed(cell_seed, 0x2ec0);
            sim.workers = config.workers;
            const auto batch = simulate_batch(problem, set.make(problem, ControlKind::Zero, eps), sim);
            unbiased = accumulate(batch.valid_log_payoffs());
        }
        for (std::size_t c = 0; c < config.controls.size(); ++c) {
            const ControlKind kind = config.controls[c];
            const BiasControl control = set.make(problem, kind, eps);
            SimConfig sim;
            sim.n_traj = config.n_traj;
            sim.epsilon = eps;
            sim.seed = cell_seed;
            sim.workers = config.workers;
            sim.stream_salt = config.common_random_numbers ? 0 : derive_seed(config.seed, c + 1);
            sim.options.record_deviation = config.record_deviation && kind != ControlKind::Zero;
            sim.options.record_residual = config.record_residual;
            const SampleBatch batch = simulate_batch(problem, control, sim);
            const auto samples = batch.valid_log_payoffs();
            const LogMoments moments = accumulate(samples);
            const std::string name(control.name());

            CellResult cell;
            cell.report = unbiased ? report_two_run(moments, *unbiased, eps, name, config.seed)
                                   : report(moments, eps, name, config.seed);
            if (config.bootstrap_resamples > 0) {
                const auto [lo, hi] = bootstrap_ci(samples, eps, config.bootstrap_resamples,
                                                   derive_seed(cell_seed, c + 1, 0xb007));
                cell.report.ci_lo = lo;
                cell.report.ci_hi = hi;
            }
            cell.g_start = control.value_at_start();
            cell.n_invalid = batch.n_invalid;
            cell.median_sup_deviation = batch.sup_deviation.empty() ? kNaN : median(batch.sup_deviation);
            cell.residual_mgf = kNaN;
            if (!batch.residual.empty()) {
                std::vector<double> valid_q;
                for (std::size_t i = 0; i < batch.size(); ++i)
                    if (batch.valid[i]) valid_q.push_back(batch.residual[i]);
                cell.residual_mgf = residual_mgf_check(valid_q, std::max(1.0, control.order()));
            }
            write_efficiency_row(eff, cell.report);
            eff.flush();
            if (config.dump_samples) {
                auto out = open_output(config.output_dir / ("samples_" + name + "_" + num(eps) + ".csv"));
                write_samples_csv(out, batch);
            }
            art.cells.push_back(std::move(cell));
        }
    }

    std::vector<std::string> fit_notes;
    for (ControlKind kind : config.controls) {
        std::vector<EstimatorReport> rows;
        for (const auto& cell : art.cells)
            if (cell.report.control == control_name(kind)) rows.push_back(cell.report);
        if (rows.size() < 4) {
            fit_notes.push_back(std::string(control_name(kind)) + ": fewer than four epsilons, no fit");
            continue;
        }
        try {
            art.fits.emplace(kind, fit_decay_order(rows));
        } catch (const NumericalError& e) {
            fit_notes.push_back(std::string(control_name(kind)) + ": " + e.what());
        }
    }

    if (config.oracle && problem.dim() == 1) {
        const PdeGrid pde = oracle_grid(problem, set.instanton, config.pde_nx);
        for (double eps : config.epsilon_list) art.oracle_z[eps] = solve_feynman_kac_1d(problem, eps, pde).z_eps;
    }

    auto sum = open_output(art.summary_txt);
    if (config.timestamp) write_timestamp(sum);
    sum << "model " << problem.name << ", T = " << problem.observable.horizon << ", dt = " << config.dt
        << ", n_traj = " << config.n_traj << ", seed = " << config.seed << "\n";
    sum << "instanton: " << set.instanton.iterations << " sweeps, last update "
        << set.instanton.final_residual << "\n\n";
    sum << "decay order of R(eps) = eps log rho (slope of log R against log eps)\n";
    for (const auto& [kind, fit] : art.fits) {
        sum << "  " << control_name(kind) << ": slope " << num(fit.fit.slope) << " stderr "
            << num(fit.fit.slope_stderr) << " points " << fit.fit.n_used;
        if (!fit.excluded.empty()) {
            sum << " (excluded eps with R <= 0:";
            for (double e : fit.excluded) sum << ' ' << num(e);
            sum << ')';
        }
        sum << '\n';
    }
    for (const auto& note : fit_notes) sum << "  " << note << '\n';
    sum << "\nepsilon,control,Z_hat,g_start,Z_oracle,R_hat,n_invalid,median_sup_deviation,residual_mgf\n";
    for (const auto& cell : art.cells) {
        const auto it = art.oracle_z.find(cell.report.epsilon);
        sum << num(cell.report.epsilon) << ',' << cell.report.control << ',' << num(cell.report.Z_hat) << ','
            << num(cell.g_start) << ',' << num(it == art.oracle_z.end() ? kNaN : it->second) << ','
            << num(cell.report.R_hat) << ',' << cell.n_invalid << ',' << num(cell.median_sup_deviation)
            << ',' << num(cell.residual_mgf) << '\n';
    }
    return art;
}

ValidationReport validate_against_oracle(const ExperimentConfig& config) {
    const Problem problem = make_problem(config);
    validate_config(config, problem);
    if (problem.dim() != 1) throw ConfigError("validate: the oracle needs a one-dimensional model");
    const TimeGrid grid(problem.observable.horizon, config.dt);
    const ControlSet set = ControlSet::build(problem, grid, config.instanton, config.riccati_scheme);
    const PdeGrid pde = oracle_grid(problem, set.instanton, config.pde_nx);
    const bool closed_form = config.model_name == "lq";

    auto eps_list = config.epsilon_list;
    std::sort(eps_list.begin(), eps_list.end(), std::greater<>());

    ValidationReport rep;
    for (double eps : eps_list) {
        ValidationRow row;
        row.epsilon = eps;
        row.z_oracle = solve_feynman_kac_1d(problem, eps, pde).z_eps;
        row.z_analytic = closed_form ? lq_solution(config.lq_a, config.lq_q, kLqCenter,
                                                   problem.observable.horizon, eps,
                                                   problem.observable.x0(0))
                                           .z0()
                                     : kNaN;
        row.g1_start = set.make(problem, ControlKind::Order1, eps).value_at_start();
        row.g2_start = set.make(problem, ControlKind::Order2, eps).value_at_start();
        row.g1_error = std::abs(row.g1_start - row.z_oracle);
        row.g2_error = std::abs(row.g2_start - row.z_oracle);
        row.g1_ratio = rep.rows.empty() ? kNaN : rep.rows.back().g1_error / row.g1_error;
        row.g2_ratio = rep.rows.empty() ? kNaN : rep.rows.back().g2_error / row.g2_error;

        const std::uint64_t cell_seed = derive_seed(config.seed, eps_bits(eps));
        for (std::size_t c = 0; c < config.controls.size(); ++c) {
            const ControlKind kind = config.controls[c];
            SimConfig sim;
            sim.n_traj = config.n_traj;
            sim.epsilon = eps;
            sim.seed = cell_seed;
            sim.workers = config.workers;
            sim.stream_salt = config.common_random_numbers ? 0 : derive_seed(config.seed, c + 1);
            const auto batch = simulate_batch(problem, set.make(problem, kind, eps), sim);
            const LogMoments m = accumulate(batch.valid_log_payoffs());
            const EstimatorReport r = report(m, eps, std::string(control_name(kind)), config.seed);
            row.z_mc[kind] = r.Z_hat;
            row.z_mc_stderr[kind] = z_stderr(eps, r.log_rho_hat, r.n);
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

void write_validation(std::ostream& out, const ValidationReport& report) {
    const auto precision = out.precision(10);
    out << "epsilon,Z_oracle,Z_analytic,g1_start,g2_start,g1_error,g2_error,g1_ratio,g2_ratio";
    std::vector<ControlKind> kinds;
    if (!report.rows.empty())
        for (const auto& [kind, z] : report.rows.front().z_mc) kinds.push_back(kind);
    for (ControlKind k : kinds) out << ",Z_mc_" << control_name(k) << ",Z_mc_se_" << control_name(k);
    out << '\n';
    for (const auto& row : report.rows) {
        out << row.epsilon << ',' << row.z_oracle << ',' << row.z_analytic << ',' << row.g1_start << ','
            << row.g2_start << ',' << row.g1_error << ',' << row.g2_error << ',' << row.g1_ratio << ','
            << row.g2_ratio;
        for (ControlKind k : kinds) out << ',' << row.z_mc.at(k) << ',' << row.z_mc_stderr.at(k);
        out << '\n';
    }
    out.precision(precision);
}

void write_instanton_csv(std::ostream& out, const InstantonPath& instanton, const RiccatiPath* riccati) {
    const auto d = instanton.phi.rows();
    const bool scalar = d == 1;
    out << 't';
    for (Eigen::Index k = 0; k < d; ++k) out << (scalar ? ",phi" : ",phi_" + std::to_string(k));
    for (Eigen::Index k = 0; k < d; ++k) out << (scalar ? ",theta" : ",theta_" + std::to_string(k));
    if (riccati != nullptr)
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index c = 0; c < d; ++c)
                out << (scalar ? ",K" : ",K_" + std::to_string(r) + std::to_string(c));
    out << '\n';
    const auto& grid = instanton.grid;
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        out << num(grid.time(i));
        for (Eigen::Index k = 0; k < d; ++k) out << ',' << num(instanton.phi(k, col));
        for (Eigen::Index k = 0; k < d; ++k) out << ',' << num(instanton.theta(k, col));
        if (riccati != nullptr)
            for (Eigen::Index r = 0; r < d; ++r)
                for (Eigen::Index c = 0; c < d; ++c) out << ',' << num(riccati->K[i](r, c));
        out << '\n';
    }
}

void write_efficiency_header(std::ostream& out) {
    out << "epsilon,control,n,seed,Z_hat,R_hat,ci_lo,ci_hi,rel_var\n";
}

void write_efficiency_row(std::ostream& out, const EstimatorReport& r) {
    out << num(r.epsilon) << ',' << r.control << ',' << r.n << ',' << r.seed << ',' << num(r.Z_hat) << ','
        << num(r.R_hat) << ',' << num(r.ci_lo) << ',' << num(r.ci_hi) << ',' << num(r.rel_var) << '\n';
}

void write_samples_csv(std::ostream& out, const SampleBatch& batch) {
    const auto d = batch.terminal_x.rows();
    out << "index,valid,log_payoff,log_weight,sup_deviation,residual";
    for (Eigen::Index k = 0; k < d; ++k) out << ",x_" << k;
    out << '\n';
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out << i << ',' << int(batch.valid[i]) << ',' << num(batch.log_payoff[i]) << ','
            << num(batch.log_weight[i]) << ','
            << num(batch.sup_deviation.empty() ? kNaN : batch.sup_deviation[i]) << ','
            << num(batch.residual.empty() ? kNaN : batch.residual[i]);
        for (Eigen::Index k = 0; k < d; ++k)
            out << ',' << num(batch.terminal_x(k, static_cast<Eigen::Index>(i)));
        out << '\n';
    }
}

}  // namespace sva
