#include <benchmark/benchmark.h>

#include "fiss/distkit.hpp"
#include "fiss/fission.hpp"
#include "fiss/modelfit.hpp"
#include "fiss/simharness.hpp"
#include "fiss/trendfilter.hpp"

using namespace fiss;

namespace {

num::Vector noisy_trend(std::size_t n, std::uint64_t seed)
{
    dist::RngStream rng(seed, 0);
    num::Vector y = sim::trend_mean(n, 0.1, rng);
    for (double& v : y) {
        v += 0.1 * rng.normal();
    }
    return y;
}

fit::Design leverage_design(fit::Family family, std::uint64_t seed)
{
    dist::RngStream rng(seed, 0);
    num::Matrix x(16, 20);
    num::Vector y(16);
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t j = 0; j < 20; ++j) {
            x(i, j) = rng.normal();
        }
        y[i] = family == fit::Family::Gaussian ? rng.normal() : static_cast<double>(rng.next_u64() % 4);
    }
    return {x, y, family, {}, {}};
}

}  // namespace

static void BM_RngNormal(benchmark::State& state)
{
    dist::RngStream rng(1, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rng.normal());
    }
}
BENCHMARK(BM_RngNormal);

static void BM_GaussianFission(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    dist::RngStream rng(2, 0);
    const num::Vector x(n, 1.0);
    const rules::FissionRule rule = rules::GaussP1{1.0, num::Matrix{{1.0}}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(rules::fission(x, rule, rng));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianFission)->Arg(16)->Arg(1000);

static void BM_PoissonFission(benchmark::State& state)
{
    dist::RngStream rng(3, 0);
    const num::Vector x(625, 3.0);
    const rules::FissionRule rule = rules::PoissonP1{0.5};
    for (auto _ : state) {
        for (double v : x) {
            benchmark::DoNotOptimize(rules::fission(v, rule, rng));
        }
    }
}
BENCHMARK(BM_PoissonFission);

static void BM_LassoCv(benchmark::State& state)
{
    const auto family = state.range(0) == 0 ? fit::Family::Gaussian : fit::Family::Poisson;
    const fit::Design d = leverage_design(family, 4);
    const num::Vector grid = fit::lambda_grid(d, 100, 1e-2);
    for (auto _ : state) {
        dist::RngStream rng(5, 0);
        benchmark::DoNotOptimize(fit::cv_select(d, grid, 10, rng));
    }
}
BENCHMARK(BM_LassoCv)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_TrendAdmm(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const num::Vector y = noisy_trend(n, 6);
    const double lambda = 0.05 * trend::trend_lambda_max(y, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(trend::trendfilter_admm(y, 1, lambda));
    }
}
BENCHMARK(BM_TrendAdmm)->Arg(50)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_KnotSelect(benchmark::State& state)
{
    const num::Vector y = noisy_trend(200, 7);
    trend::KnotOptions opt;
    for (auto _ : state) {
        benchmark::DoNotOptimize(trend::knot_select(y, 1, opt));
    }
}
BENCHMARK(BM_KnotSelect)->Unit(benchmark::kMillisecond);

static void BM_SimTrial(benchmark::State& state)
{
    const auto e = static_cast<sim::Experiment>(state.range(0));
    const sim::ExperimentConfig c = sim::default_config(e);
    std::size_t t = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim::run_trial(c, t++));
    }
    state.SetLabel(sim::experiment_name(e));
}
BENCHMARK(BM_SimTrial)
    ->Arg(static_cast<int>(sim::Experiment::LinregLeverage))
    ->Arg(static_cast<int>(sim::Experiment::GlmPoisson))
    ->Arg(static_cast<int>(sim::Experiment::MultitestGauss))
    ->Arg(static_cast<int>(sim::Experiment::TrendfilterGrid))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
