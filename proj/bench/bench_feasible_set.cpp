// Serial reference vs shared/OpenMP evaluation of one loan date's grid, and
// the per-point cost of each CPNR evaluator.

#include <benchmark/benchmark.h>

#include "activemargin/margin.hpp"

using namespace activemargin;

namespace {

const PricePair& pair() {
    static const PricePair p = [] {
        SyntheticParams s;
        s.seed = 42;
        s.days = 1100;
        s.correlation = 0.3;
        return generate_synthetic(s);
    }();
    return p;
}

SearchConfig config(CpnrMethod method) {
    SearchConfig c;
    c.method = method;
    return c;
}

void BM_FeasibleSetSerialReference(benchmark::State& state) {
    const auto cfg = config(static_cast<CpnrMethod>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(feasible_set_serial(pair(), 900, cfg));
}

void BM_FeasibleSetShared(benchmark::State& state) {
    const auto cfg = config(static_cast<CpnrMethod>(state.range(0)));
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(feasible_set(pair(), 900, cfg, workers));
}

void BM_SinglePoint(benchmark::State& state) {
    std::vector<double> values;
    fill_index(pair(), 0.2, 100, 800, values);
    const auto chain = estimate(values, default_g(values));
    LoanTerms t;
    t.p0 = pair().purchased.closes()[900];
    t.p0_collateral = pair().collateral.closes()[900];
    t.delta = 0.2;
    t.q0 = 0.55 * t.p0 - t.delta * t.p0_collateral;
    t.omega = 1.25;
    const std::size_t h = classify(chain.states(), t.initial_index());
    const auto method = static_cast<CpnrMethod>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(cpnr(chain, t, h, method));
}

}  // namespace

BENCHMARK(BM_FeasibleSetSerialReference)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeasibleSetShared)
    ->Args({0, 1})
    ->Args({0, 4})
    ->Args({1, 1})
    ->Args({1, 4})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SinglePoint)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
