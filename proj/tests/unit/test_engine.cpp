#include "oracles.hpp"

#include <stochprox/engine.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/nlme_pk.hpp>
#include <stochprox/parallel.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace stochprox;

namespace {

// ℓ(θ) = -θ²/2 with no latent contribution.
class Parabola final : public LatentModel
{
public:
    Parabola() { layout_.add("theta", 1); stat_layout_.add("s", 1); }
    std::string name() const override { return "parabola"; }
    Index dim_theta() const override { return 1; }
    Index dim_stat() const override { return 1; }
    Index n_subjects() const override { return 1; }
    Index latent_dim() const override { return 1; }
    const Layout& theta_layout() const override { return layout_; }
    const Layout& stat_layout() const override { return stat_layout_; }
    double phi(const Vector& t) const override { return -0.5 * t.squaredNorm(); }
    Vector grad_phi(const Vector& t) const override { return -t; }
    Vector psi(const Vector&) const override { return Vector::Zero(1); }
    Matrix psi_jacobian(const Vector&) const override { return Matrix::Zero(1, 1); }
    Vector complete_information_diag(const Vector&, const Vector&) const override { return Vector::Ones(1); }
    Vector complete_information_rowsum(const Vector&, const Vector&) const override { return Vector::Ones(1); }
    Index subject_stat_dim() const override { return 1; }
    void subject_stat(Index, const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out) const override { out = z; }
    Vector assemble_stat(const Matrix& s) const override { return s.col(0); }
    SubjectPrior subject_prior(const Vector&, Index) const override { return {Vector::Zero(1), Vector::Ones(1)}; }
    double subject_loglik(const Vector&, Index, const Eigen::Ref<const Vector>&) const override { return 0.0; }
    Vector maximize_surrogate(const Vector&, const PenaltySpec&, const Vector&,
                              const CoordinateDescentOptions&) const override
    {
        return Vector::Zero(1);
    }
    std::vector<bool> default_penalty_mask() const override { return {true}; }
    Vector default_initial_theta() const override { return Vector::Ones(1); }

private:
    Layout layout_, stat_layout_;
};

struct Toy
{
    LmmSimulation sim;
    LmmToyModel model;
    explicit Toy(std::uint64_t seed, Index N = 20, Index J = 8, Index D = 20)
        : sim(simulate_lmm(N, J, D, seed)), model(sim.data)
    {
    }
};

EngineConfig toy_config(const LmmToyModel& m, Algorithm a, double lambda, long iters)
{
    EngineConfig c;
    c.algorithm = a;
    c.penalty.kind = PenaltyKind::lasso;
    c.penalty.lambda = lambda;
    c.penalty.mask = m.default_penalty_mask();
    c.max_iter = iters;
    c.schedule.gamma_star = 1.0 / *m.lipschitz();
    c.schedule.m_star = 20;
    return c;
}

} // namespace

TEST(Engine, StatUpdates)
{
    Vector a(2), b(2);
    a << 1.0, 2.0;
    b << 3.0, -2.0;
    EXPECT_EQ(stat_update_mc({a}), a);
    EXPECT_EQ(stat_update_mc({a, a, a}), a);
    EXPECT_EQ(stat_update_mc({a, b}), Vector((Vector(2) << 2.0, 0.0).finished()));
    EXPECT_THROW(stat_update_mc({}), ArgumentError);

    EXPECT_EQ(stat_update_sa(b, {a}, 1.0), stat_update_mc({a}));
    EXPECT_EQ(stat_update_sa(b, {a}, 0.0), b);
    EXPECT_EQ(stat_update_sa(Vector::Zero(1), {Vector::Constant(1, 2.0)}, 0.5)(0), 1.0);
    EXPECT_THROW(stat_update_sa(b, {a}, 1.5), ArgumentError);
    EXPECT_THROW(stat_update_sa(b, {a}, -0.1), ArgumentError);
}

TEST(Engine, MonteCarloMeanNearExactStat)
{
    Toy t(1, 5, 8, 2);
    const Vector th = t.sim.theta_star;
    const long M = 100000;
    std::vector<Vector> draws;
    draws.reserve(M);
    Matrix z(2, 5);
    for (long i = 0; i < M; ++i) {
        for (Index k = 0; k < 5; ++k) {
            CounterRng rng(11, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
            t.model.sample_exact(th, k, rng, z.col(k));
        }
        draws.push_back(t.model.stat(z));
    }
    const Vector mean = stat_update_mc(draws);
    Vector var = Vector::Zero(mean.size());
    for (const auto& d : draws) var += (d - mean).cwiseAbs2();
    const Vector se = (var / (M - 1.0) / M).cwiseSqrt();
    const Vector exact = *t.model.exact_mean_stat(th);
    for (Index i = 0; i < mean.size(); ++i) EXPECT_LE(std::abs(mean(i) - exact(i)), 3.0 * se(i) + 1e-12);
}

TEST(Engine, PgStepOnParabola)
{
    Parabola m;
    PenaltySpec none;
    none.mask = {true};
    EXPECT_DOUBLE_EQ(pg_step(m, none, Vector::Ones(1), 0.5, Vector::Zero(1))(0), 0.5);
    EXPECT_THROW(pg_step(m, none, Vector::Ones(1), 0.0, Vector::Zero(1)), ArgumentError);
}

TEST(Engine, MstepLinearSolveAtZeroLambda)
{
    // N > D + 1 so the Gram matrix is invertible.
    Toy t(2, 40, 8, 5);
    const Vector s = *t.model.exact_mean_stat(t.sim.theta_star);
    PenaltySpec p;
    p.mask = t.model.default_penalty_mask();
    p.kind = PenaltyKind::lasso;
    p.lambda = 0.0;
    const Vector got = mstep_exact(t.model, p, s, Vector::Zero(t.model.dim_theta()));
    // ∇(φ + <s,ψ>) = -Gθ + s_lin = 0.
    const Vector want = t.model.gram().ldlt().solve(s.tail(t.model.dim_theta()));
    EXPECT_LE((got - want).norm(), 1e-8 * want.norm());
}

TEST(Engine, MstepAboveLambdaMaxIsEmpty)
{
    Toy t(3);
    const Vector s = *t.model.exact_mean_stat(t.sim.theta_star);
    PenaltySpec p;
    p.mask = t.model.default_penalty_mask();
    p.kind = PenaltyKind::lasso;
    p.lambda = 1e8;
    Vector th = mstep_exact(t.model, p, s, Vector::Zero(t.model.dim_theta()));
    // λ_max of the surrogate: gradient at the unpenalized optimum with the rest at 0.
    const double lmax = lambda_max(p, gradient_surrogate(t.model, th, s));
    p.lambda = 1.0001 * lmax;
    th = mstep_exact(t.model, p, s, Vector::Zero(t.model.dim_theta()));
    EXPECT_TRUE(RunTrace::support_of(th, p.mask).empty());
    p.lambda = 0.95 * lmax;
    th = mstep_exact(t.model, p, s, Vector::Zero(t.model.dim_theta()));
    EXPECT_FALSE(RunTrace::support_of(th, p.mask).empty());
}

TEST(Engine, MstepMatchesProxGradientOnSurrogate)
{
    Toy t(4);
    const Vector s = *t.model.exact_mean_stat(t.sim.theta_star);
    PenaltySpec p;
    p.mask = t.model.default_penalty_mask();
    p.kind = PenaltyKind::lasso;
    p.lambda = 50.0;
    const Vector cd = mstep_exact(t.model, p, s, Vector::Zero(t.model.dim_theta()));
    // Proximal gradient on θ ↦ φ(θ) + <s,ψ(θ)>, whose Hessian is -Σ X_k'X_k.
    const double Ls = oracle::spectral_norm_dense(t.model.gram());
    Vector th = Vector::Zero(t.model.dim_theta());
    for (int i = 0; i < 100000; ++i) {
        th = prox(p, 1.0 / Ls, th + (1.0 / Ls) * gradient_surrogate(t.model, th, s));
    }
    EXPECT_LE((cd - th).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Engine, FixedPointOfProxGradient)
{
    Toy t(5);
    auto c = toy_config(t.model, Algorithm::em_pen, 20.0, 3000);
    c.track_objective = false;
    c.mstep.tolerance = 1e-13;
    const auto tr = run(t.model, c);
    const Vector& th = tr.final_theta;
    const Vector next = pg_step(t.model, c.penalty, th, 1.0 / *t.model.lipschitz(), *t.model.exact_mean_stat(th));
    EXPECT_LE((next - th).norm(), 1e-7 * (1.0 + th.norm()));
}

TEST(Engine, DeterministicPgAscentAndGem)
{
    Toy t(6);
    auto c = toy_config(t.model, Algorithm::pg, 20.0, 2000);
    const auto tr = run(t.model, c);
    ASSERT_EQ(tr.thetas.size(), 2001u);
    // F near 1e5 has double rounding noise above 1e-12; compare in extended precision.
    auto prev = oracle::lmm_lasso_objective_precise(t.sim.data, tr.thetas[0], c.penalty.lambda, c.penalty.mask);
    for (std::size_t n = 1; n < tr.thetas.size(); ++n) {
        const auto cur = oracle::lmm_lasso_objective_precise(t.sim.data, tr.thetas[n], c.penalty.lambda, c.penalty.mask);
        EXPECT_GE(static_cast<double>(cur - prev), -1e-12) << "iteration " << n;
        prev = cur;
    }
    // GEM inequality for the surrogate built at θ_n.
    Vector th = c.init_theta.value_or(t.model.default_initial_theta());
    const double gamma = 1.0 / *t.model.lipschitz();
    for (int n = 0; n < 200; ++n) {
        const Vector s = *t.model.exact_mean_stat(th);
        const Vector next = pg_step(t.model, c.penalty, th, gamma, s);
        const double before = surrogate_value(t.model, th, s) - penalty_value(c.penalty, th).value;
        const double after = surrogate_value(t.model, next, s) - penalty_value(c.penalty, next).value;
        EXPECT_GE(after, before - 1e-9 * std::abs(before));
        th = next;
    }
}

TEST(Engine, EmPenAscent)
{
    Toy t(7);
    auto c = toy_config(t.model, Algorithm::em_pen, 20.0, 300);
    const auto tr = run(t.model, c);
    for (std::size_t n = 1; n < tr.rows.size(); ++n) {
        EXPECT_GE(*tr.rows[n].objective, *tr.rows[n - 1].objective - 1e-9 * std::abs(*tr.rows[n - 1].objective));
    }
    EXPECT_EQ(tr.projections, 0);
}

TEST(Engine, SapgWithUnitDeltaEqualsMcpg)
{
    Toy t(8);
    auto c = toy_config(t.model, Algorithm::mcpg, 20.0, 200);
    c.seed = 3;
    const auto a = run(t.model, c);
    c.algorithm = Algorithm::sapg;
    c.schedule.delta_star = 1.0;
    c.schedule.beta = 0.0;
    const auto b = run(t.model, c);
    ASSERT_EQ(a.thetas.size(), b.thetas.size());
    for (std::size_t i = 0; i < a.thetas.size(); ++i) EXPECT_EQ(a.thetas[i], b.thetas[i]);
}

TEST(Engine, DeterministicAcrossThreadCounts)
{
    auto sim = simulate_pk(8, 6, 3, 2);
    PkModel m(sim.data);
    EngineConfig c;
    c.algorithm = Algorithm::saem_pen;
    c.penalty.kind = PenaltyKind::lasso;
    c.penalty.lambda = 5.0;
    c.penalty.mask = m.default_penalty_mask();
    c.schedule.m_star = 2;
    c.schedule.delta_star = 0.5;
    c.max_iter = 30;
    c.mcmc_burnin = 5;
    RunTrace one, many;
    {
        ThreadLimit l(1);
        one = run(m, c);
    }
    {
        ThreadLimit l(8);
        many = run(m, c);
    }
    EXPECT_EQ(one.final_theta, many.final_theta);
    ASSERT_EQ(one.thetas.size(), many.thetas.size());
    for (std::size_t i = 0; i < one.thetas.size(); ++i) EXPECT_EQ(one.thetas[i], many.thetas[i]);
    const auto again = run(m, c);
    EXPECT_EQ(one.final_theta, again.final_theta);
}

TEST(Engine, UnpenalizedCoordinatesNotThresholded)
{
    Toy t(9);
    auto c = toy_config(t.model, Algorithm::mcpg, 1e6, 50);
    const auto tr = run(t.model, c);
    const Index D = t.model.n_covariates();
    EXPECT_NE(tr.final_theta(0), 0.0);
    EXPECT_NE(tr.final_theta(D + 1), 0.0);
    EXPECT_TRUE(RunTrace::support_of(tr.final_theta, c.penalty.mask).empty());
    for (const auto& row : tr.rows) EXPECT_EQ(row.support, 0);
}

TEST(Engine, SapgStatErrorDecreasesAcrossWindows)
{
    Toy t(10);
    auto c = toy_config(t.model, Algorithm::sapg, 20.0, 2000);
    c.schedule.alpha = 0.9;
    c.schedule.beta = 0.4;
    c.schedule.delta_star = 0.5;
    c.schedule.m_star = 60;
    c.track_objective = false;
    const auto tr = run(t.model, c);
    std::vector<double> window_means;
    // Decade windows: the expected error drops by about 10^0.2 between them.
    for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{10, 100}, {100, 1000}, {1000, 2001}}) {
        double sum = 0.0;
        for (std::size_t n = lo; n < hi; ++n) sum += *tr.rows[n].stat_error;
        window_means.push_back(sum / static_cast<double>(hi - lo));
    }
    for (std::size_t w = 1; w < window_means.size(); ++w) EXPECT_LT(window_means[w], window_means[w - 1]);
}

TEST(Engine, TraceShapeAndStride)
{
    Toy t(11, 6, 8, 3);
    auto c = toy_config(t.model, Algorithm::sapg, 1.0, 25);
    c.theta_stride = 10;
    const auto tr = run(t.model, c);
    EXPECT_EQ(tr.rows.size(), 26u);
    EXPECT_EQ(tr.theta_iterations, (std::vector<long>{0, 10, 20, 25}));
    EXPECT_EQ(tr.iterations, 25);
    EXPECT_FALSE(tr.aborted);
    for (std::size_t n = 1; n < tr.rows.size(); ++n) {
        EXPECT_EQ(tr.rows[n].batch, 20);
        EXPECT_TRUE(tr.rows[n].stat_error.has_value());
    }
}

TEST(Engine, StepClippedToInverseLipschitz)
{
    Toy t(12, 6, 8, 3);
    auto c = toy_config(t.model, Algorithm::mcpg, 1.0, 5);
    c.schedule.gamma_star = 100.0;
    const auto tr = run(t.model, c);
    EXPECT_DOUBLE_EQ(tr.rows[1].gamma, 1.0 / *t.model.lipschitz());
    EXPECT_FALSE(tr.warnings.empty());
}

TEST(Engine, EarlyStop)
{
    Toy t(13, 6, 8, 3);
    auto c = toy_config(t.model, Algorithm::pg, 1.0, 100000);
    c.stop_tolerance = 1e-6;
    c.stop_window = 50;
    const auto tr = run(t.model, c);
    EXPECT_TRUE(tr.stopped_early);
    EXPECT_LT(tr.iterations, 100000);
    EXPECT_EQ(tr.theta_iterations.back(), tr.iterations);
}

TEST(Engine, CheckpointResumeIsBitIdentical)
{
    auto sim = simulate_pk(6, 6, 2, 3);
    PkModel m(sim.data);
    EngineConfig c;
    c.algorithm = Algorithm::sapg;
    c.penalty.kind = PenaltyKind::lasso;
    c.penalty.lambda = 2.0;
    c.penalty.mask = m.default_penalty_mask();
    c.schedule.adaptive = true;
    c.schedule.n0 = 10;
    c.schedule.alpha = 0.75;
    c.schedule.delta_star = 0.5;
    c.schedule.m_star = 3;
    c.curvature = CurvatureKind::majorant;
    c.max_iter = 30;
    const auto full = run(m, c);

    EngineState st = init_engine_state(m, c);
    advance(m, c, st, [](const EngineState& s) { return s.iteration < 12; });
    const auto path = (std::filesystem::temp_directory_path() / "stochprox_engine_ckpt.bin").string();
    save_checkpoint(path, st);
    EngineState back = load_checkpoint(path);
    std::filesystem::remove(path);
    advance(m, c, back);
    EXPECT_EQ(back.trace.final_theta, full.final_theta);
    ASSERT_EQ(back.trace.rows.size(), full.rows.size());
    for (std::size_t i = 0; i < full.thetas.size(); ++i) EXPECT_EQ(back.trace.thetas[i], full.thetas[i]);
    EXPECT_EQ(back.trace.step_diagonals.size(), full.step_diagonals.size());
}

TEST(Engine, ConfigValidation)
{
    auto sim = simulate_pk(4, 4, 1, 4);
    PkModel m(sim.data);
    EngineConfig c;
    c.penalty.mask = m.default_penalty_mask();
    c.algorithm = Algorithm::em_pen;
    EXPECT_THROW(run(m, c), ArgumentError);
    c.algorithm = Algorithm::saem_pen;
    c.schedule.adaptive = true;
    EXPECT_THROW(run(m, c), ArgumentError);
    c.schedule.adaptive = false;
    c.sampler = SamplerKind::exact;
    EXPECT_THROW(run(m, c), ArgumentError);
    c.sampler = SamplerKind::automatic;
    c.init_theta = Vector::Zero(3);
    EXPECT_THROW(run(m, c), ArgumentError);
    EXPECT_THROW(algorithm_from_string("newton"), ArgumentError);
    EXPECT_EQ(algorithm_from_string(to_string(Algorithm::saem_pen)), Algorithm::saem_pen);
}

TEST(Engine, PinnedVariancesNeverMove)
{
    PkModelSpec spec;
    spec.pinned_omega = {std::nan(""), 0.01, 0.01, std::nan(""), std::nan("")};
    auto sim = simulate_pk(8, 6, 2, 5);
    PkModel m(sim.data, spec);
    EngineConfig c;
    c.algorithm = Algorithm::saem_pen;
    c.penalty.kind = PenaltyKind::lasso;
    c.penalty.lambda = 2.0;
    c.penalty.mask = m.default_penalty_mask();
    c.schedule.delta_star = 0.5;
    c.max_iter = 20;
    const auto tr = run(m, c);
    for (const auto& th : tr.thetas) {
        EXPECT_EQ(th(m.sigma_offset() + 1), 10.0);
        EXPECT_EQ(th(m.sigma_offset() + 2), 10.0);
    }
}
