#include <stochprox/engine.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/mcmc.hpp>
#include <stochprox/nlme_pk.hpp>
#include <stochprox/penalty.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace stochprox;

namespace {

Vector random_vector(Index n, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 2.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(gen);
    return v;
}

void BM_ProxElasticNet(benchmark::State& state)
{
    const Index n = state.range(0);
    PenaltySpec p;
    p.kind = PenaltyKind::elastic_net;
    p.lambda = 1.0;
    p.alpha = 0.7;
    p.mask.assign(static_cast<std::size_t>(n), true);
    const Vector x = random_vector(n, 1);
    for (auto _ : state) benchmark::DoNotOptimize(prox(p, 0.1, x));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ProxElasticNet)->Arg(42)->Arg(602);

// Toy at desk (D=20) and full (D=300) covariate counts.
void BM_ToyPgStep(benchmark::State& state)
{
    const auto sim = simulate_lmm(40, 8, state.range(0), 1);
    const LmmToyModel m(sim.data);
    PenaltySpec p;
    p.kind = PenaltyKind::lasso;
    p.lambda = 20.0;
    p.mask = m.default_penalty_mask();
    const Vector th = sim.theta_star;
    const double gamma = 1.0 / *m.lipschitz();
    for (auto _ : state) {
        const Vector s = *m.exact_mean_stat(th);
        benchmark::DoNotOptimize(pg_step(m, p, th, gamma, s));
    }
}
BENCHMARK(BM_ToyPgStep)->Arg(20)->Arg(300);

void BM_ToyMstep(benchmark::State& state)
{
    const auto sim = simulate_lmm(40, 8, state.range(0), 2);
    const LmmToyModel m(sim.data);
    PenaltySpec p;
    p.kind = PenaltyKind::lasso;
    p.lambda = 20.0;
    p.mask = m.default_penalty_mask();
    const Vector s = *m.exact_mean_stat(sim.theta_star);
    const Vector start = m.default_initial_theta();
    for (auto _ : state) benchmark::DoNotOptimize(mstep_exact(m, p, s, start));
}
BENCHMARK(BM_ToyMstep)->Arg(20)->Arg(300);

void BM_PkConcentration(benchmark::State& state)
{
    Vector z(kPkDims);
    for (Index r = 0; r < kPkDims; ++r) z(r) = pk_population_intercepts()[r];
    double t = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pk_concentration(150000.0, z, t));
        t = t < 48.0 ? t + 0.25 : 0.5;
    }
}
BENCHMARK(BM_PkConcentration);

void BM_PkMcmcSweep(benchmark::State& state)
{
    const auto sim = simulate_pk(20, 12, 20, 3);
    const PkModel m(sim.data);
    const Vector th = m.default_initial_theta();
    McmcOptions opt;
    McmcState chains = init_mcmc_state(m, th, opt);
    std::uint64_t it = 0;
    for (auto _ : state) benchmark::DoNotOptimize(mh_sweep(m, th, chains, opt, 1, it++, 0));
    state.SetItemsProcessed(state.iterations() * m.n_subjects());
}
BENCHMARK(BM_PkMcmcSweep);

void BM_PkSaemIteration(benchmark::State& state)
{
    const auto sim = simulate_pk(20, 12, 20, 4);
    const PkModel m(sim.data);
    EngineConfig c;
    c.algorithm = Algorithm::saem_pen;
    c.penalty.kind = PenaltyKind::lasso;
    c.penalty.lambda = 10.0;
    c.penalty.mask = m.default_penalty_mask();
    c.schedule.delta_star = 0.5;
    c.schedule.m_star = 5;
    c.max_iter = 1;
    c.track_objective = false;
    c.track_stat_error = false;
    EngineState s = init_engine_state(m, c);
    long iters = 0;
    for (auto _ : state) {
        c.max_iter = ++iters;
        advance(m, c, s);
    }
}
BENCHMARK(BM_PkSaemIteration);

} // namespace
BENCHMARK_MAIN();
