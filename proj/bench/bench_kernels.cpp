// Serial reference vs OpenMP version of each parallel kernel.
#include <benchmark/benchmark.h>

#include "jcc/experiment.hpp"
#include "jcc/filtering.hpp"
#include "jcc/oracle.hpp"

using namespace jcc;

namespace {

const ModelSpec& model() {
    static const ModelSpec m = load_experiment("paper_sim_A").model;
    return m;
}

const ActionSpace& actions() {
    static const ActionSpace a = ActionSpace::enumerate(model());
    return a;
}

void BM_GridModel(benchmark::State& st) {
    const BeliefGrid grid = build_grid(static_cast<std::size_t>(st.range(0)), 3);
    const bool parallel = st.range(1) != 0;
    for (auto _ : st) {
        GridModel g = parallel ? build_grid_model(grid, model(), actions())
                               : build_grid_model_serial(grid, model(), actions());
        benchmark::DoNotOptimize(g.cost.data());
    }
}

void BM_ValueIteration(benchmark::State& st) {
    const GridModel g = build_grid_model(build_grid(static_cast<std::size_t>(st.range(0)), 3), model(), actions());
    const bool parallel = st.range(1) != 0;
    for (auto _ : st) {
        ValueFunction vf = value_iterate(g, model().beta, 1e-8, parallel);
        benchmark::DoNotOptimize(vf.values.data());
    }
}

void BM_MonteCarlo(benchmark::State& st) {
    const Scheme s = Scheme::quantized(5);
    const Policy p(s, actions().size(), 17);
    EvalConfig ec;
    ec.horizon = 200;
    ec.replications = static_cast<std::size_t>(st.range(0));
    const bool parallel = st.range(1) != 0;
    for (auto _ : st) {
        EvalResult r = parallel ? monte_carlo_cost(p, s, model(), actions(), ec)
                                : monte_carlo_cost_serial(p, s, model(), actions(), ec);
        benchmark::DoNotOptimize(r.mean);
    }
}

void BM_FilterLoss(benchmark::State& st) {
    LossConfig lc;
    lc.trials = static_cast<std::size_t>(st.range(0));
    lc.horizon = 10;
    const Belief mu = Belief::uniform(3), nu({0.6, 0.2, 0.2});
    const bool parallel = st.range(1) != 0;
    for (auto _ : st) {
        LossEstimate e = parallel ? empirical_loss(model(), actions(), mu, nu, lc)
                                  : empirical_loss_serial(model(), actions(), mu, nu, lc);
        benchmark::DoNotOptimize(e.mean.data());
    }
}

} // namespace

BENCHMARK(BM_GridModel)->ArgsProduct({{5, 15}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ValueIteration)->ArgsProduct({{5, 15}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarlo)->ArgsProduct({{1000}, {0, 1}})->ArgNames({"reps", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterLoss)->ArgsProduct({{10000}, {0, 1}})->ArgNames({"trials", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
