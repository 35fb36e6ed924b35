#include <benchmark/benchmark.h>

#include "sva/bias.hpp"
#include "sva/experiment.hpp"
#include "sva/mc.hpp"
#include "sva/oracle.hpp"
#include "sva/rng.hpp"
#include "sva/stats.hpp"

namespace {

const sva::Problem& ou_quartic() {
    static const sva::Problem problem = sva::make_ou_quartic();
    return problem;
}

const sva::ControlSet& controls() {
    static const sva::ControlSet set = sva::ControlSet::build(
        ou_quartic(), sva::TimeGrid(5.0, 5e-3), {}, sva::RiccatiScheme::RK4);
    return set;
}

void BM_NormalStream(benchmark::State& state) {
    sva::NormalStream rng(1, 2);
    for (auto _ : state) benchmark::DoNotOptimize(rng.next());
}
BENCHMARK(BM_NormalStream);

void BM_Philox(benchmark::State& state) {
    sva::Philox4x32::Counter ctr{0, 0, 0, 0};
    const sva::Philox4x32::Key key{1, 2};
    for (auto _ : state) {
        ++ctr[0];
        benchmark::DoNotOptimize(sva::Philox4x32::apply(ctr, key));
    }
}
BENCHMARK(BM_Philox);

// One full trajectory (1000 Euler steps) per iteration.
void BM_Trajectory(benchmark::State& state) {
    const auto kind = static_cast<sva::ControlKind>(state.range(0));
    const auto control = controls().make(ou_quartic(), kind, 0.125);
    sva::SimOptions options;
    options.record_residual = state.range(1) != 0;
    std::uint64_t i = 0;
    for (auto _ : state) {
        sva::NormalStream rng(7, i++);
        benchmark::DoNotOptimize(sva::simulate_one(ou_quartic(), control, 0.125, rng, options));
    }
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Trajectory)->ArgsProduct({{0, 1, 2}, {0, 1}});

void BM_LogMoments(benchmark::State& state) {
    std::vector<double> w(static_cast<std::size_t>(state.range(0)));
    sva::NormalStream rng(3, 0);
    for (auto& v : w) v = 3.0 * rng.next();
    for (auto _ : state) benchmark::DoNotOptimize(sva::accumulate(w).log_rho());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogMoments)->Arg(100000);

void BM_Bootstrap(benchmark::State& state) {
    std::vector<double> w(10000);
    sva::NormalStream rng(3, 0);
    for (auto& v : w) v = rng.next();
    for (auto _ : state) benchmark::DoNotOptimize(sva::bootstrap_ci(w, 0.25, 200, 11));
}
BENCHMARK(BM_Bootstrap)->Unit(benchmark::kMillisecond);

void BM_Instanton(benchmark::State& state) {
    const sva::TimeGrid grid(5.0, 5e-3);
    for (auto _ : state) benchmark::DoNotOptimize(sva::solve_instanton(ou_quartic(), grid));
}
BENCHMARK(BM_Instanton)->Unit(benchmark::kMillisecond);

void BM_FeynmanKac(benchmark::State& state) {
    const auto grid = sva::default_pde_grid(ou_quartic(), -1.0, 0.82, 3.0, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sva::solve_feynman_kac_1d(ou_quartic(), 0.5, grid));
}
BENCHMARK(BM_FeynmanKac)->Arg(501)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
