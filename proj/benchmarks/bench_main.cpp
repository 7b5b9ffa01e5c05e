#include <benchmark/benchmark.h>

#include "taxsim/calibration.hpp"
#include "taxsim/dqn.hpp"
#include "taxsim/econ.hpp"
#include "taxsim/world.hpp"

using namespace taxsim;

static void BM_IncomeTax(benchmark::State& state) {
    const CalibrationData cal = load_calibration();
    double gross = 1234.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_income_tax(gross, cal.tax_schedule));
        gross = gross < 650000.0 ? gross + 617.0 : 1234.0;
    }
}
BENCHMARK(BM_IncomeTax);

static void BM_DqnTrainStep(benchmark::State& state) {
    DqnConfig cfg;
    cfg.seed = 7;
    cfg.gamma = gamma_from_eta(14);
    DqnPolicy policy(cfg);
    Rng rng(11);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        Transition t;
        t.state.assign(kStateDim, 0.0);
        t.next_state.assign(kStateDim, 0.0);
        for (auto& v : t.state) v = rng.uniform();
        for (auto& v : t.next_state) v = rng.uniform();
        t.action = static_cast<int>(rng.uniform_int(cfg.num_actions()));
        t.reward = rng.uniform(-1.0, 1.0);
        policy.push_transition(t);
    }
    for (auto _ : state) benchmark::DoNotOptimize(policy.train_from_buffer());
}
BENCHMARK(BM_DqnTrainStep);

static void BM_WorldYear(benchmark::State& state) {
    const CalibrationData cal = load_calibration();
    for (auto _ : state) {
        SimulationConfig cfg;
        cfg.population = state.range(0);
        cfg.steps = 365;
        cfg.seed = 42;
        cfg.decision_backend = BackendSpec::scripted(ComplianceProfile::full_pay, 1);
        benchmark::DoNotOptimize(run(cfg, cal));
    }
}
BENCHMARK(BM_WorldYear)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
