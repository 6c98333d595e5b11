// Microbenchmarks for the hot numerical kernels: the penalized path fit,
// the logistic fluctuation step, and one collaborative selection stage.

#include <benchmark/benchmark.h>

#include "ctlasso/common.hpp"
#include "ctlasso/ctmle.hpp"
#include "ctlasso/dataset.hpp"
#include "ctlasso/estimators.hpp"
#include "ctlasso/lasso_path.hpp"
#include "ctlasso/tmle.hpp"

#include <vector>

namespace {

using namespace ctlasso;

struct BenchData {
    MatrixXd w;
    VectorXd a;
    VectorXd y;  // already in [0,1]
};

BenchData make_data(int n, int p, std::uint64_t seed) {
    Rng rng(seed);
    BenchData d;
    d.w.resize(n, p);
    d.a.resize(n);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        double eta = -0.3;
        for (int j = 0; j < p; ++j) {
            const double v = (j % 3 == 0) ? (rng.uniform01() < 0.2 ? 1.0 : 0.0) : rng.normal();
            d.w(i, j) = v;
            if (j < 8) eta += 0.25 * v;
        }
        d.a[i] = rng.uniform01() < expit(eta) ? 1.0 : 0.0;
        d.y[i] = clamp_prob(0.3 + 0.2 * d.a[i] + 0.1 * d.w(i, 0) + 0.1 * rng.normal(), 0.0, 1.0);
    }
    return d;
}

void bm_lasso_path(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int p = static_cast<int>(state.range(1));
    const BenchData d = make_data(n, p, 7);
    PathConfig cfg;
    cfg.grid_size = 50;
    for (auto _ : state) {
        LassoPath path = lasso_logistic_path(d.w, d.a, cfg);
        benchmark::DoNotOptimize(path.coefs.data());
    }
}
BENCHMARK(bm_lasso_path)->Args({500, 50})->Args({1000, 200})->Unit(benchmark::kMillisecond);

void bm_fluctuation(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const BenchData d = make_data(n, 10, 11);
    OutcomeFit q = fit_outcome_mainterm(d.y, d.a, d.w, {0, 1, 2});
    VectorXd g(n);
    for (int i = 0; i < n; ++i) g[i] = clamp_prob(0.2 + 0.6 * (d.w(i, 0) > 0), 0.025, 0.975);
    const std::vector<CleverCovariate> covs = {CleverCovariate::from_ps(d.a, g)};
    for (auto _ : state) {
        FluctuationResult fr = fluctuate(d.y, q.qa, q.q1, q.q0, covs);
        benchmark::DoNotOptimize(fr.qa_star.data());
    }
}
BENCHMARK(bm_fluctuation)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void bm_ctmle1(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int p = 30;
    const BenchData d = make_data(n, p, 13);
    PathConfig cfg;
    cfg.grid_size = 20;
    FoldAssignment folds = make_folds(n, 5, 3, d.a);
    OutcomeFit q = fit_outcome_mainterm(d.y, d.a, d.w, {0, 1, 2});
    OutcomeScale scale;  // identity: y already in [0,1]
    PathCv cv = fit_path_cv(d.w, d.a, folds, cfg);
    for (auto _ : state) {
        Ctmle1Result r = ctmle1(d.y, d.a, d.w, cv, folds, q, scale);
        benchmark::DoNotOptimize(r.estimate.psi);
    }
}
BENCHMARK(bm_ctmle1)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
