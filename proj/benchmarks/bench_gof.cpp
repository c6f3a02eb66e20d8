#include "cstat/cash.hpp"
#include "cstat/cumulants.hpp"
#include "cstat/fit.hpp"
#include "cstat/gof.hpp"
#include "cstat/model.hpp"
#include "cstat/rng.hpp"

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

namespace {

using namespace cstat;

void BM_CashPerBin(benchmark::State& state) {
    Rng rng(42);
    std::vector<double> s(4096), n(4096);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = 0.01 + 99.0 * rng.next_double();
        n[i] = static_cast<double>(rng.poisson(s[i]));
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(c_per_bin(n[i], s[i]));
        i = (i + 1) & 4095;
    }
}
BENCHMARK(BM_CashPerBin);

void BM_CumulantsDirect(benchmark::State& state) {
    const double s = static_cast<double>(state.range(0)) / 10.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cumulants_direct(s));
    }
}
BENCHMARK(BM_CumulantsDirect)->Arg(1)->Arg(10)->Arg(100)->Arg(1000);

void BM_TableLookup(benchmark::State& state) {
    static const CumulantTable table = CumulantTable::build(0.5, 20.0, 1e-3, 1e-30, 1, 0);
    Rng rng(7);
    std::vector<double> queries(4096);
    for (auto& q : queries) q = 0.6 + 19.0 * rng.next_double();
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(table.at(queries[i]));
        i = (i + 1) & 4095;
    }
}
BENCHMARK(BM_TableLookup);

void BM_FitPowerLaw(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    PowerLawModel model(n);
    Eigen::VectorXd theta(2);
    theta << 1.0, 3.0;
    BinnedDataset data = simulate_counts(model, theta, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_mle(data, model));
    }
}
BENCHMARK(BM_FitPowerLaw)->Arg(10)->Arg(100)->Arg(400);

void BM_CorrectedZ(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    PowerLawModel model(n);
    Eigen::VectorXd theta(2);
    theta << 1.0, 3.0;
    BinnedDataset data = simulate_counts(model, theta, 12);
    FitResult fit = fit_mle(data, model);
    ModelEvaluation eval = evaluate_model(model, fit.theta_hat);
    CumulantProvider cum;
    for (auto _ : state) {
        benchmark::DoNotOptimize(corrected_z_high_test(fit.c_min, eval.s, eval.X, cum));
    }
}
BENCHMARK(BM_CorrectedZ)->Arg(10)->Arg(100)->Arg(400);

void BM_ParametricBootstrap(benchmark::State& state) {
    PowerLawModel model(100);
    Eigen::VectorXd theta(2);
    theta << 1.0, 3.0;
    BinnedDataset data = simulate_counts(model, theta, 13);
    FitResult fit = fit_mle(data, model);
    BootstrapOptions options;
    options.B = static_cast<int>(state.range(0));
    options.seed = 99;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            parametric_bootstrap_test(fit.c_min, model, fit.theta_hat, options));
    }
}
BENCHMARK(BM_ParametricBootstrap)->Arg(10)->Arg(100);

} // namespace

BENCHMARK_MAIN();
