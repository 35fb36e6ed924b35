// Command line front end: run an epsilon sweep, validate against the PDE
// oracle, or dump an instanton path.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "sva/error.hpp"
#include "sva/experiment.hpp"
#include "sva/odesolve.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_run(const std::string& config_path, unsigned workers, bool workers_set) {
    auto config = sva::load_config(config_path);
    if (workers_set) config.workers = workers;
    const auto art = sva::run_experiment(config);
    std::cout << "wrote " << art.instanton_csv.string() << '\n'
              << "wrote " << art.efficiency_csv.string() << '\n'
              << "wrote " << art.summary_txt.string() << '\n';
    for (const auto& [kind, fit] : art.fits)
        std::cout << sva::control_name(kind) << ": decay order " << fit.fit.slope << " +- "
                  << fit.fit.slope_stderr << '\n';
    return 0;
}

int cmd_validate(const std::string& config_path, const std::string& out_path) {
    const auto config = sva::load_config(config_path);
    const auto report = sva::validate_against_oracle(config);
    sva::write_validation(std::cout, report);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw sva::ConfigError("cannot open " + out_path + " for writing");
        sva::write_validation(out, report);
    }
    return 0;
}

int cmd_instanton(const std::string& model, double dt, const std::string& out_path, double lq_a,
                  double lq_q, const std::string& scheme) {
    const auto problem = sva::make_problem(model, lq_a, lq_q);
    sva::RiccatiScheme riccati_scheme = sva::RiccatiScheme::RK4;
    if (scheme == "euler") riccati_scheme = sva::RiccatiScheme::Euler;
    else if (scheme != "rk4") throw sva::ConfigError("unknown Riccati scheme '" + scheme + "'");
    const sva::TimeGrid grid(problem.observable.horizon, dt);
    const auto set = sva::ControlSet::build(problem, grid, {}, riccati_scheme);
    std::ofstream out(out_path);
    if (!out) throw sva::ConfigError("cannot open " + out_path + " for writing");
    sva::write_instanton_csv(out, set.instanton, &set.riccati);
    std::cout << "instanton converged in " << set.instanton.iterations << " sweeps; wrote " << out_path
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Importance sampling for small-noise diffusions with instanton-based controls"};
    app.require_subcommand(1);

    std::string config_path;
    unsigned workers = 0;
    auto* run = app.add_subcommand("run", "Run the epsilon sweep described by a config file");
    run->add_option("--config", config_path, "Config file (key = value lines)")->required();
    auto* workers_opt = run->add_option("--workers", workers, "Override the number of worker threads");

    std::string validate_out;
    auto* validate = app.add_subcommand("validate", "Compare predictors and estimates with the PDE oracle");
    validate->add_option("--config", config_path, "Config file (key = value lines)")->required();
    validate->add_option("--out", validate_out, "Also write the table to this CSV file");

    std::string model, out_path, scheme = "rk4";
    double dt = 5e-3, lq_a = 1.0, lq_q = 1.0;
    auto* inst = app.add_subcommand("instanton", "Solve the instanton and Riccati paths and write them as CSV");
    inst->add_option("--model", model, "ou_quartic or lq")->required();
    inst->add_option("--dt", dt, "Time step")->required();
    inst->add_option("--out", out_path, "Output CSV path")->required();
    inst->add_option("--lq-a", lq_a, "Drift rate of the lq model");
    inst->add_option("--lq-q", lq_q, "Curvature of the lq observable");
    inst->add_option("--riccati-scheme", scheme, "rk4 or euler");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*run) return cmd_run(config_path, workers, workers_opt->count() > 0);
        if (*validate) return cmd_validate(config_path, validate_out);
        if (*inst) return cmd_instanton(model, dt, out_path, lq_a, lq_q, scheme);
    } catch (const sva::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const sva::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
