#include "oracles.hpp"

#include <stochprox/engine.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/mcmc.hpp>
#include <stochprox/parallel.hpp>

#include <gtest/gtest.h>

using namespace stochprox;

namespace {

// One subject, one latent coordinate. Prior N(0, 4) and likelihood
// exp(-3z²/8) give a N(0, 1) posterior.
class GaussianTarget final : public LatentModel
{
public:
    GaussianTarget() { layout_.add("theta", 1); stat_layout_.add("z", 1); }
    std::string name() const override { return "gaussian"; }
    Index dim_theta() const override { return 1; }
    Index dim_stat() const override { return 1; }
    Index n_subjects() const override { return 1; }
    Index latent_dim() const override { return 1; }
    const Layout& theta_layout() const override { return layout_; }
    const Layout& stat_layout() const override { return stat_layout_; }
    double phi(const Vector&) const override { return 0.0; }
    Vector grad_phi(const Vector&) const override { return Vector::Zero(1); }
    Vector psi(const Vector&) const override { return Vector::Zero(1); }
    Matrix psi_jacobian(const Vector&) const override { return Matrix::Zero(1, 1); }
    Vector complete_information_diag(const Vector&, const Vector&) const override { return Vector::Ones(1); }
    Vector complete_information_rowsum(const Vector&, const Vector&) const override { return Vector::Ones(1); }
    Index subject_stat_dim() const override { return 1; }
    void subject_stat(Index, const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out) const override { out = z; }
    Vector assemble_stat(const Matrix& s) const override { return s.col(0); }
    SubjectPrior subject_prior(const Vector&, Index) const override { return {Vector::Zero(1), Vector::Constant(1, 2.0)}; }
    double subject_loglik(const Vector&, Index, const Eigen::Ref<const Vector>& z) const override
    {
        return -0.375 * z(0) * z(0);
    }
    Vector maximize_surrogate(const Vector&, const PenaltySpec&, const Vector& start,
                              const CoordinateDescentOptions&) const override
    {
        return start;
    }
    std::vector<bool> default_penalty_mask() const override { return {false}; }
    Vector default_initial_theta() const override { return Vector::Zero(1); }

private:
    Layout layout_, stat_layout_;
};

// Mean and a batch-means standard error.
std::pair<double, double> mean_and_se(const std::vector<double>& x, std::size_t batches = 1000)
{
    const std::size_t b = x.size() / batches;
    double total = 0.0;
    std::vector<double> means(batches, 0.0);
    for (std::size_t i = 0; i < batches * b; ++i) means[i / b] += x[i] / static_cast<double>(b);
    for (double m : means) total += m;
    const double mean = total / static_cast<double>(batches);
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(batches - 1);
    return {mean, std::sqrt(var / static_cast<double>(batches))};
}

} // namespace

TEST(Mcmc, AcceptProbability)
{
    EXPECT_EQ(mh_accept_probability(0.0), 1.0);
    EXPECT_EQ(mh_accept_probability(3.0), 1.0);
    EXPECT_DOUBLE_EQ(mh_accept_probability(std::log(0.25)), 0.25);
    EXPECT_EQ(mh_accept_probability(std::nan("")), 0.0);
    EXPECT_EQ(mh_accept_probability(-std::numeric_limits<double>::infinity()), 0.0);
}

TEST(Mcmc, DetailedBalanceTwoStates)
{
    // Symmetric proposal q between two states; P_ij = q·a(π_j/π_i).
    for (double p0 : {0.1, 0.3, 0.5, 0.77}) {
        const double pi[2] = {p0, 1.0 - p0};
        const double q = 0.6;
        const double P01 = q * mh_accept_probability(std::log(pi[1]) - std::log(pi[0]));
        const double P10 = q * mh_accept_probability(std::log(pi[0]) - std::log(pi[1]));
        EXPECT_NEAR(pi[0] * P01, pi[1] * P10, 1e-15);
    }
}

TEST(Mcmc, KnownGaussianTarget)
{
    GaussianTarget model;
    McmcOptions opt;
    const Vector th = Vector::Zero(1);
    auto state = init_mcmc_state(model, th, opt);
    std::vector<double> xs, sq;
    const long M = 1000000;
    xs.reserve(M);
    sq.reserve(M);
    for (long i = 0; i < M; ++i) {
        CounterRng rng(1, 0, static_cast<std::uint64_t>(i));
        mh_sweep_subject(model, th, 0, state.subjects[0], opt, rng);
        const double z = state.subjects[0].z(0);
        xs.push_back(z);
        sq.push_back(z * z);
    }
    auto [m, se] = mean_and_se(xs);
    auto [v, se2] = mean_and_se(sq);
    EXPECT_LE(std::abs(m), 3.0 * se);
    EXPECT_LE(std::abs(v - 1.0), 3.0 * se2);
}

TEST(Mcmc, IdenticalProposalAlwaysAccepted)
{
    // Zero random-walk step: the proposal equals the current point.
    GaussianTarget model;
    McmcOptions opt;
    opt.sd_min = 1e-300;
    opt.adapt = false;
    const Vector th = Vector::Zero(1);
    auto state = init_mcmc_state(model, th, opt);
    state.subjects[0].rw_sd(0) = 0.0;
    for (int i = 0; i < 100; ++i) {
        CounterRng rng(2, 0, static_cast<std::uint64_t>(i));
        auto c = mh_sweep_subject(model, th, 0, state.subjects[0], opt, rng);
        EXPECT_EQ(c.rw_accepts, 1);
    }
}

TEST(Mcmc, AdaptStep)
{
    McmcOptions opt;
    McmcSubjectState s;
    s.rw_sd = Vector::Constant(2, 0.5);
    s.window_accepts = Vector::Constant(2, opt.target_acceptance * 50.0);
    s.window_sweeps = 50;
    adapt_step(s, opt);
    EXPECT_DOUBLE_EQ(s.rw_sd(0), 0.5);
    EXPECT_EQ(s.window_sweeps, 0);
    EXPECT_EQ(s.window_accepts, Vector::Zero(2));

    s.window_accepts = Vector::Constant(2, 50.0);
    s.window_sweeps = 50;
    adapt_step(s, opt);
    EXPECT_GT(s.rw_sd(0), 0.5);

    s.window_accepts = Vector::Zero(2);
    s.window_sweeps = 50;
    s.rw_sd = Vector::Constant(2, 2e-6);
    for (int i = 0; i < 200; ++i) {
        s.window_sweeps = 50;
        adapt_step(s, opt);
    }
    EXPECT_GE(s.rw_sd.minCoeff(), opt.sd_min);
}

TEST(Mcmc, OptionsValidate)
{
    McmcOptions o;
    EXPECT_NO_THROW(o.validate());
    o.target_acceptance = 1.0;
    EXPECT_THROW(o.validate(), ArgumentError);
    o = McmcOptions{};
    o.window = 0;
    EXPECT_THROW(o.validate(), ArgumentError);
    o = McmcOptions{};
    o.sd_min = 2e3;
    EXPECT_THROW(o.validate(), ArgumentError);
}

TEST(Mcmc, ToyPosteriorMomentsAndAcceptance)
{
    auto sim = simulate_lmm(4, 8, 2, 3);
    LmmToyModel m(sim.data);
    const Vector th = sim.theta_star;
    McmcOptions opt;
    auto state = init_mcmc_state(m, th, opt);
    const auto post = m.exact_posterior(th);
    const long burn = 5000, M = 100000;
    std::vector<std::vector<double>> draws(8);
    double acc = 0.0;
    long acc_n = 0;
    for (long i = 0; i < burn + M; ++i) {
        auto c = mh_sweep(m, th, state, opt, 4, static_cast<std::uint64_t>(i), 0);
        if (i >= burn) {
            for (Index k = 0; k < 4; ++k) {
                draws[static_cast<std::size_t>(2 * k)].push_back(state.subjects[static_cast<std::size_t>(k)].z(0));
                draws[static_cast<std::size_t>(2 * k + 1)].push_back(state.subjects[static_cast<std::size_t>(k)].z(1));
            }
            if (i >= burn + M / 2) {
                acc += static_cast<double>(c.rw_accepts);
                acc_n += c.rw_proposals;
            }
        }
    }
    for (Index k = 0; k < 4; ++k) {
        for (int r = 0; r < 2; ++r) {
            auto [mean, se] = mean_and_se(draws[static_cast<std::size_t>(2 * k + r)]);
            EXPECT_LE(std::abs(mean - post.mean[k](r)), 3.0 * se) << "subject " << k << " coord " << r;
        }
    }
    EXPECT_NEAR(acc / static_cast<double>(acc_n), opt.target_acceptance, 0.1);
}

TEST(Mcmc, FrozenChainPassesKs)
{
    auto sim = simulate_lmm(3, 8, 2, 5);
    LmmToyModel m(sim.data);
    const Vector th = sim.theta_star;
    McmcOptions opt;
    auto state = init_mcmc_state(m, th, opt);
    for (long i = 0; i < 5000; ++i) mh_sweep(m, th, state, opt, 6, static_cast<std::uint64_t>(i), 0);
    opt.adapt = false;
    const auto post = m.exact_posterior(th);
    const long thin = 10, M = 10000;
    std::vector<std::vector<double>> draws(6);
    for (long i = 0; i < M * thin; ++i) {
        mh_sweep(m, th, state, opt, 6, static_cast<std::uint64_t>(10000 + i), 0);
        if (i % thin != thin - 1) continue;
        for (Index k = 0; k < 3; ++k) {
            for (int r = 0; r < 2; ++r) draws[static_cast<std::size_t>(2 * k + r)].push_back(state.subjects[static_cast<std::size_t>(k)].z(r));
        }
    }
    for (Index k = 0; k < 3; ++k) {
        for (int r = 0; r < 2; ++r) {
            const double mu = post.mean[k](r), sd = std::sqrt(post.cov[k](r, r));
            const double p = oracle::ks_pvalue(draws[static_cast<std::size_t>(2 * k + r)],
                                               [&](double x) { return oracle::normal_cdf(x, mu, sd); });
            EXPECT_GT(p, 0.01) << "subject " << k << " coord " << r;
        }
    }
}

TEST(Mcmc, SubjectParallelSweepIsReproducible)
{
    auto sim = simulate_lmm(12, 8, 2, 7);
    LmmToyModel m(sim.data);
    McmcOptions opt;
    auto a = init_mcmc_state(m, sim.theta_star, opt);
    auto b = a;
    for (int i = 0; i < 200; ++i) mh_sweep(m, sim.theta_star, a, opt, 9, static_cast<std::uint64_t>(i), 0);
    {
        ThreadLimit one(1);
        for (int i = 0; i < 200; ++i) mh_sweep(m, sim.theta_star, b, opt, 9, static_cast<std::uint64_t>(i), 0);
    }
    EXPECT_EQ(a.latent(), b.latent());
}

TEST(Mcmc, ChainPersistsAcrossIterations)
{
    auto sim = simulate_lmm(5, 8, 2, 8);
    LmmToyModel m(sim.data);
    EngineConfig c;
    c.algorithm = Algorithm::sapg;
    c.sampler = SamplerKind::mcmc;
    c.schedule.gamma_star = 0.01;
    c.schedule.m_star = 1;
    c.penalty.kind = PenaltyKind::none;
    c.penalty.mask = m.default_penalty_mask();
    c.max_iter = 6;
    c.seed = 5;
    std::vector<McmcState> after;
    std::vector<Vector> thetas;
    EngineState state = init_engine_state(m, c);
    advance(m, c, state, [&](const EngineState& s) {
        after.push_back(s.mcmc);
        thetas.push_back(s.theta);
        return true;
    });
    ASSERT_EQ(after.size(), 6u);
    // Iteration n+1 starts from the last draw of iteration n.
    for (std::size_t n = 0; n + 1 < after.size(); ++n) {
        McmcState replay = after[n];
        for (Index k = 0; k < 5; ++k) {
            CounterRng rng(c.seed, static_cast<std::uint64_t>(k), n + 1, 0);
            mh_sweep_subject(m, thetas[n], k, replay.subjects[static_cast<std::size_t>(k)], c.mcmc, rng);
        }
        EXPECT_EQ(replay.latent(), after[n + 1].latent());
    }
}
