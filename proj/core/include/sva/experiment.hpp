#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sva/bias.hpp"
#include "sva/mc.hpp"
#include "sva/model.hpp"
#include "sva/odesolve.hpp"
#include "sva/stats.hpp"

namespace sva {

/// Environment variable giving the output directory when the config has none.
inline constexpr const char* kOutputDirEnv = "SVA_OUTPUT_DIR";

struct ExperimentConfig {
    std::string model_name = "ou_quartic";
    std::vector<double> epsilon_list{0.5, 0.25, 0.125, 0.0625};
    std::vector<ControlKind> controls{ControlKind::Zero, ControlKind::Order1,
                                      ControlKind::Order2};
    std::size_t n_traj = 100000;
    double dt = 5e-3;
    std::uint64_t seed = 20220101;
    std::filesystem::path output_dir = "sva_output";

    bool record_deviation = false;
    bool record_residual = false;
    bool two_run_rho = false;
    bool dump_samples = false;
    bool common_random_numbers = true;
    bool timestamp = true;
    bool oracle = true;  ///< PDE reference per epsilon (one-dimensional models)

    unsigned workers = 0;
    int bootstrap_resamples = 200;

    double lq_a = 1.0;
    double lq_q = 1.0;

    InstantonOptions instanton;
    RiccatiScheme riccati_scheme = RiccatiScheme::RK4;
    int pde_nx = 2001;
};

/// Parses `key = value` lines; `#` starts a comment, lists are comma
/// separated. Unknown keys and malformed values raise ConfigError.
[[nodiscard]] ExperimentConfig parse_config(std::istream& in);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
/// Checks the invariants: non-empty distinct positive epsilons, at least one
/// control, n_traj >= 1, dt dividing T. Throws ConfigError.
void validate_config(const ExperimentConfig& config, const Problem& problem);

/// "ou_quartic" or "lq" (with lq_a, lq_q). Throws ConfigError otherwise.
[[nodiscard]] Problem make_problem(const ExperimentConfig& config);
[[nodiscard]] Problem make_problem(const std::string& name, double lq_a = 1.0, double lq_q = 1.0);

/// Instanton, Riccati and the three built-in controls on one grid.
struct ControlSet {
    InstantonPath instanton;
    RiccatiPath riccati;
    /// Throws InstantonDivergence/NumericalError if the instanton did not converge.
    static ControlSet build(const Problem& problem, const TimeGrid& grid,
                            const InstantonOptions& options, RiccatiScheme scheme);
    [[nodiscard]] BiasControl make(const Problem& problem, ControlKind kind,
                                   double epsilon) const;
};

struct CellResult {
    EstimatorReport report;
    double g_start = 0.0;  ///< value_at_start of the control
    std::size_t n_invalid = 0;
    double median_sup_deviation = 0.0;  ///< NaN unless recorded
    double residual_mgf = 0.0;          ///< NaN unless recorded
};

struct ExperimentArtifacts {
    std::filesystem::path instanton_csv;
    std::filesystem::path efficiency_csv;
    std::filesystem::path summary_txt;
    std::vector<CellResult> cells;
    std::map<ControlKind, DecayFit> fits;  ///< controls with enough usable points
    std::map<double, double> oracle_z;     ///< epsilon -> PDE Z
};

/// Runs the sweep and writes instanton.csv, efficiency.csv and summary.txt
/// (plus samples_<control>_<eps>.csv when dump_samples is set).
[[nodiscard]] ExperimentArtifacts run_experiment(const ExperimentConfig& config);

struct ValidationRow {
    double epsilon = 0.0;
    double z_oracle = 0.0;
    double z_analytic = 0.0;  ///< NaN unless the model has a closed form
    double g1_start = 0.0;
    double g2_start = 0.0;
    double g1_error = 0.0;  ///< |g1_start - z_oracle|
    double g2_error = 0.0;
    double g1_ratio = 0.0;  ///< error at previous (larger) eps / error here; NaN on the first row
    double g2_ratio = 0.0;
    std::map<ControlKind, double> z_mc;
    std::map<ControlKind, double> z_mc_stderr;
};

struct ValidationReport {
    std::vector<ValidationRow> rows;  ///< epsilons in decreasing order
};

/// Compares the deterministic predictors g_k(0, x0) and the Monte Carlo
/// estimates against the PDE oracle for each epsilon. Requires d = 1.
[[nodiscard]] ValidationReport validate_against_oracle(const ExperimentConfig& config);
void write_validation(std::ostream& out, const ValidationReport& report);

/// CSV row writers with a fixed column order.
void write_instanton_csv(std::ostream& out, const InstantonPath& instanton,
                         const RiccatiPath* riccati);
void write_efficiency_header(std::ostream& out);
void write_efficiency_row(std::ostream& out, const EstimatorReport& report);
void write_samples_csv(std::ostream& out, const SampleBatch& batch);

}  // namespace sva
