#include "sva/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sva/error.hpp"

namespace sva {

std::uint64_t trajectory_stream_id(std::uint64_t salt, std::uint64_t index) noexcept {
    return salt == 0 ? index : derive_seed(salt, index);
}

namespace {

struct Workspace {
    Workspace(int d, int m)
        : x(d), b(d), grad(d), drift(d), noise(d), u(m), xi(m), scratch(d) {}
    Vector x, b, grad, drift, noise, u, xi;
    ControlScratch scratch;
};

// Scalar version of run_path for d = m = 1 and the built-in controls.
bool run_path_1d(const Problem& problem, const BiasControl& control, double epsilon,
                 NormalStream& rng, const SimOptions& options, Workspace& ws, double& log_weight,
                 double& sup_dev, double& residual_sum) {
    const auto& model = problem.model;
    const double s = model.sigma()(0, 0);
    const double D = model.cov()(0, 0);
    const TimeGrid& grid = control.grid();
    const double dt = grid.dt();
    const double noise_scale = std::sqrt(epsilon * dt) * s;
    const double weight_scale = std::sqrt(dt / epsilon);
    const double quad_scale = dt / (2.0 * epsilon);
    const ControlKind kind = control.kind();
    const InstantonPath* inst = control.instanton();
    const double* phi = inst != nullptr ? inst->phi.data() : nullptr;
    const double* theta = inst != nullptr ? inst->theta.data() : nullptr;
    const std::vector<Matrix>* K = control.riccati() != nullptr ? &control.riccati()->K : nullptr;
    const bool track = options.record_deviation && phi != nullptr;

    double x = problem.observable.x0(0);
    double lw = 0.0, dev = 0.0;
    residual_sum = 0.0;
    const std::size_t n_steps = grid.n_steps();
    for (std::size_t i = 0; i < n_steps; ++i) {
        ws.x(0) = x;
        model.drift(ws.x, ws.b);
        const double b = ws.b(0);
        if (options.record_residual)
            residual_sum += control.hjb_defect_at_node(i, ws.x, ws.b, epsilon, ws.scratch) * dt;
        const double xi = rng.next();
        double grad = 0.0;
        if (kind == ControlKind::Order1) grad = theta[i];
        else if (kind == ControlKind::Order2) grad = theta[i] + (*K)[i](0, 0) * (x - phi[i]);
        const double u = s * grad;
        lw -= weight_scale * u * xi + quad_scale * u * u;
        x += dt * (b + D * grad) + noise_scale * xi;
        if (track) dev = std::max(dev, std::abs(x - phi[i + 1]));
        if (!std::isfinite(x)) {
            ws.x(0) = x;
            log_weight = lw;
            sup_dev = dev;
            return false;
        }
    }
    ws.x(0) = x;
    log_weight = lw;
    sup_dev = dev;
    return std::isfinite(lw);
}

// Simulates one path into the workspace; returns false on a non-finite state.
bool run_path(const Problem& problem, const BiasControl& control, double epsilon,
              NormalStream& rng, const SimOptions& options, Workspace& ws, double& log_weight,
              double& sup_dev, double& residual_sum) {
    if (problem.dim() == 1 && problem.model.noise_dim() == 1 && control.kind() != ControlKind::Custom)
        return run_path_1d(problem, control, epsilon, rng, options, ws, log_weight, sup_dev, residual_sum);
    const auto& model = problem.model;
    const Matrix& sigma = model.sigma();
    const Matrix& D = model.cov();
    const TimeGrid& grid = control.grid();
    const double dt = grid.dt();
    const double noise_scale = std::sqrt(epsilon * dt);
    const double weight_scale = std::sqrt(dt / epsilon);
    const double quad_scale = dt / (2.0 * epsilon);
    const bool tilted = control.kind() != ControlKind::Zero;
    const InstantonPath* path = options.record_deviation ? control.instanton() : nullptr;

    ws.x = problem.observable.x0;
    log_weight = 0.0;
    sup_dev = 0.0;
    residual_sum = 0.0;
    const std::size_t n_steps = grid.n_steps();
    for (std::size_t i = 0; i < n_steps; ++i) {
        model.drift(ws.x, ws.b);
        if (options.record_residual)
            residual_sum += control.hjb_defect_at_node(i, ws.x, ws.b, epsilon, ws.scratch) * dt;
        rng.fill(ws.xi);
        ws.noise.noalias() = sigma.lazyProduct(ws.xi);
        if (tilted) {
            control.gradient_at_node(i, ws.x, ws.grad);
            ws.u.noalias() = sigma.transpose().lazyProduct(ws.grad);
            log_weight -= weight_scale * ws.u.dot(ws.xi) + quad_scale * ws.u.squaredNorm();
            ws.drift.noalias() = D.lazyProduct(ws.grad);
            ws.drift += ws.b;
            ws.x += dt * ws.drift + noise_scale * ws.noise;
        } else {
            ws.x += dt * ws.b + noise_scale * ws.noise;
        }
        if (path != nullptr)
            sup_dev = std::max(sup_dev, (ws.x - path->phi.col(static_cast<Eigen::Index>(i + 1))).norm());
        if (!ws.x.allFinite()) return false;
    }
    return std::isfinite(log_weight);
}

}  // namespace

TrajectorySample simulate_one(const Problem& problem, const BiasControl& control, double epsilon,
                              NormalStream& rng, const SimOptions& options) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("simulate: eps must be positive");
    if (options.record_deviation && control.instanton() == nullptr)
        throw ConfigError("simulate: deviation tracking needs a control built on an instanton");
    if (std::abs(control.grid().horizon() - problem.observable.horizon) > 1e-12 * problem.observable.horizon)
        throw ConfigError("simulate: control grid horizon differs from the problem horizon");
    Workspace ws(problem.dim(), problem.model.noise_dim());
    double log_weight = 0.0, sup_dev = 0.0, residual_sum = 0.0;
    TrajectorySample sample;
    sample.valid = run_path(problem, control, epsilon, rng, options, ws, log_weight, sup_dev, residual_sum);
    sample.terminal_x = ws.x;
    sample.log_weight = log_weight;
    if (!sample.valid) {
        sample.log_payoff = std::numeric_limits<double>::quiet_NaN();
        return sample;
    }
    const double f_T = problem.observable.f(ws.x);
    sample.log_payoff = f_T / epsilon + log_weight;
    if (!std::isfinite(sample.log_payoff)) sample.valid = false;
    if (options.record_deviation) sample.sup_deviation = sup_dev;
    if (options.record_residual) {
        const double scale = std::pow(epsilon, -control.order());
        const double g_T = control.value_at_node(control.grid().n_steps(), ws.x, ws.scratch);
        sample.residual = scale * (f_T - g_T) + scale * residual_sum;
    }
    return sample;
}

TrajectorySample SampleBatch::sample(std::size_t i) const {
    TrajectorySample s;
    s.log_payoff = log_payoff.at(i);
    s.log_weight = log_weight.at(i);
    s.terminal_x = terminal_x.col(static_cast<Eigen::Index>(i));
    if (!sup_deviation.empty()) s.sup_deviation = sup_deviation[i];
    if (!residual.empty()) s.residual = residual[i];
    s.valid = valid[i] != 0;
    return s;
}

std::vector<double> SampleBatch::valid_log_payoffs() const {
    std::vector<double> out;
    out.reserve(size() - n_invalid);
    for (std::size_t i = 0; i < size(); ++i)
        if (valid[i]) out.push_back(log_payoff[i]);
    return out;
}

SampleBatch simulate_batch(const Problem& problem, const BiasControl& control, const SimConfig& config) {
    if (config.n_traj == 0) throw ConfigError("simulate: n_traj must be at least 1");
    if (!(config.epsilon > 0.0) || !std::isfinite(config.epsilon))
        throw ConfigError("simulate: eps must be positive");
    if (config.options.record_deviation && control.instanton() == nullptr)
        throw ConfigError("simulate: deviation tracking needs a control built on an instanton");

    const std::size_t n = config.n_traj;
    SampleBatch batch;
    batch.log_payoff.assign(n, 0.0);
    batch.log_weight.assign(n, 0.0);
    batch.valid.assign(n, 1);
    batch.terminal_x.resize(problem.dim(), static_cast<Eigen::Index>(n));
    if (config.options.record_deviation) batch.sup_deviation.assign(n, 0.0);
    if (config.options.record_residual) batch.residual.assign(n, 0.0);

    unsigned workers = config.workers == 0 ? std::thread::hardware_concurrency() : config.workers;
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>((n + 63) / 64)));

    constexpr std::size_t kChunk = 256;
    std::atomic<std::size_t> next_chunk{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto work = [&]() {
        try {
            for (;;) {
                const std::size_t begin = next_chunk.fetch_add(kChunk);
                if (begin >= n) break;
                const std::size_t end = std::min(n, begin + kChunk);
                for (std::size_t i = begin; i < end; ++i) {
                    NormalStream rng(config.seed, trajectory_stream_id(config.stream_salt, i));
                    const TrajectorySample s =
                        simulate_one(problem, control, config.epsilon, rng, config.options);
                    batch.log_payoff[i] = s.log_payoff;
                    batch.log_weight[i] = s.log_weight;
                    batch.valid[i] = s.valid ? 1 : 0;
                    batch.terminal_x.col(static_cast<Eigen::Index>(i)) = s.terminal_x;
                    if (s.sup_deviation) batch.sup_deviation[i] = *s.sup_deviation;
                    if (s.residual) batch.residual[i] = *s.residual;
                }
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next_chunk.store(n);
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);

    batch.n_invalid = static_cast<std::size_t>(std::count(batch.valid.begin(), batch.valid.end(), 0));
    if (static_cast<double>(batch.n_invalid) > config.max_invalid_fraction * static_cast<double>(n)) {
        std::ostringstream msg;
        msg << "simulate: " << batch.n_invalid << " of " << n
            << " trajectories became non-finite (eps = " << config.epsilon << ", control "
            << control.name() << ")";
        throw NumericalError(msg.str());
    }
    return batch;
}

double residual_mgf_check(std::span<const double> residuals, double k) {
    if (!(k > 0.0)) throw ConfigError("residual check: order k must be positive");
    if (residuals.empty()) throw ConfigError("residual check: no residuals recorded");
    double top = -std::numeric_limits<double>::infinity();
    for (double q : residuals) top = std::max(top, 2.0 * q);
    if (!std::isfinite(top)) throw NumericalError("residual check: non-finite residual");
    double sum = 0.0;
    for (double q : residuals) sum += std::exp(2.0 * q - top);
    return top + std::log(sum) - std::log(static_cast<double>(residuals.size()));
}

double residual_mgf_check(const SampleBatch& batch, double k) {
    if (batch.residual.empty()) throw ConfigError("residual check: no residuals recorded");
    std::vector<double> valid;
    valid.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch.valid[i]) valid.push_back(batch.residual[i]);
    return residual_mgf_check(valid, k);
}

}  // namespace sva
