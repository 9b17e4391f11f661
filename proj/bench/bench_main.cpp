#include <benchmark/benchmark.h>

#include <cmath>

#include "agedep/path_sim.hpp"
#include "agedep/volterra_solver.hpp"

using namespace agedep;

namespace {

RateSpec rates() { return RateSpec({Matrix{{0, 1}, {2, 0}}, Matrix{{0, 0.5}, {0.5, 0}}}, 4.0); }

RegimeModel model() {
    RegimeModel m;
    m.r = {0.03, 0.07};
    m.mu = m.r;
    m.kappa = {0.0, 0.0};
    m.vol.sigma0 = {0.15, 0.35};
    return m;
}

GridSpec grid(int n_t, int n_logs) {
    GridSpec g;
    g.n_t = n_t;
    g.n_logs = n_logs;
    g.s_min = std::exp(-2.0);
    g.s_max = std::exp(2.0);
    g.n_y = 11;
    return g;
}

// Serial is the pointwise reference path; parallel uses the stencils under OpenMP.
void BM_Apply(benchmark::State& state) {
    const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
    const VolterraOperator op(model(), rates(), SolverClaim::vanilla(PayoffSpec::call(1.0)),
                              grid(static_cast<int>(state.range(1)), static_cast<int>(state.range(2))));
    const auto u = op.first_term();
    for (auto _ : state) benchmark::DoNotOptimize(op.apply(u, exec));
}
BENCHMARK(BM_Apply)
    ->ArgNames({"parallel", "n_t", "n_logs"})
    ->Args({0, 21, 81})
    ->Args({1, 21, 81})
    ->Args({1, 51, 201})
    ->Unit(benchmark::kMillisecond);

void BM_ExtendToAges(benchmark::State& state) {
    const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
    const VolterraOperator op(model(), rates(), SolverClaim::vanilla(PayoffSpec::call(1.0)), grid(21, 81));
    const auto u = op.first_term();
    for (auto _ : state) benchmark::DoNotOptimize(op.extend_to_ages(u, exec));
}
BENCHMARK(BM_ExtendToAges)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_McPayoffs(benchmark::State& state) {
    const RegimeModel m = model();
    const RateSpec spec = rates();
    ClaimSpec claim;
    claim.kind = state.range(1) ? ClaimSpec::Kind::up_out_call : ClaimSpec::Kind::call;
    claim.barrier = 1.3;
    McOptions opt;
    opt.n_paths = 20000;
    opt.seed = 7;
    opt.exec = state.range(0) ? Exec::parallel : Exec::serial;
    const MarketState s0{0.0, 1.0, 0, 0.0};
    for (auto _ : state) benchmark::DoNotOptimize(mc_payoffs(claim, m, spec, s0, opt));
    state.SetItemsProcessed(state.iterations() * opt.n_paths);
}
BENCHMARK(BM_McPayoffs)
    ->ArgNames({"parallel", "barrier"})
    ->Args({0, 0})
    ->Args({1, 0})
    ->Args({0, 1})
    ->Args({1, 1})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
