#include "oracles.hpp"

#include <stochprox/engine.hpp>
#include <stochprox/lmm_toy.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace stochprox;

namespace {

Vector random_theta(Index d, std::mt19937_64& gen, double scale = 1.0)
{
    std::normal_distribution<double> nd(0.0, scale);
    Vector t(d);
    for (Index i = 0; i < d; ++i) t(i) = nd(gen);
    return t;
}

// log p(y, z; θ) written directly, without the 2π constants.
double complete_loglik_direct(const LmmToyModel& m, const Vector& theta, const Matrix& z)
{
    const auto& d = m.data();
    double v = 0.0;
    for (Index k = 0; k < d.n_subjects; ++k) {
        for (Index j = 0; j < d.n_times; ++j) {
            const double r = d.y(k, j) - z(0, k) - z(1, k) * d.times(k, j);
            v -= 0.5 * r * r;
        }
        const Eigen::Vector2d e = Eigen::Vector2d(z(0, k), z(1, k)) - m.design_apply(k, theta);
        v -= 0.5 * e.squaredNorm();
    }
    return v;
}

} // namespace

TEST(LmmToy, PaperDimensions)
{
    auto sim = simulate_lmm(40, 8, 300, 1);
    LmmToyModel m(sim.data);
    EXPECT_EQ(m.dim_theta(), 602);
    EXPECT_EQ(sim.theta_star(0), 1.0);
    EXPECT_EQ(sim.theta_star(301), 1.0);
    // 12 non-zero covariate effects, all in [0.5, 1.5].
    int active = 0;
    for (Index i = 0; i < 602; ++i) {
        if (i == 0 || i == 301) continue;
        if (sim.theta_star(i) != 0.0) {
            ++active;
            EXPECT_GE(sim.theta_star(i), 0.5);
            EXPECT_LE(sim.theta_star(i), 1.5);
        }
    }
    EXPECT_EQ(active, 12);
    EXPECT_EQ(lmm_default_times(8), (std::vector<double>{0.25, 4, 6, 8, 10, 12, 14, 16}));
}

TEST(LmmToy, Reproducible)
{
    auto a = simulate_lmm(10, 8, 5, 42);
    auto b = simulate_lmm(10, 8, 5, 42);
    auto c = simulate_lmm(10, 8, 5, 43);
    EXPECT_EQ(a.data.y, b.data.y);
    EXPECT_EQ(a.theta_star, b.theta_star);
    EXPECT_NE(a.data.y, c.data.y);
}

TEST(LmmToy, NoCovariatesDegeneratesToScalarMeans)
{
    auto sim = simulate_lmm(5, 4, 0, 2);
    LmmToyModel m(sim.data);
    EXPECT_EQ(m.dim_theta(), 2);
    Vector th(2);
    th << 0.3, -1.2;
    for (Index k = 0; k < 5; ++k) {
        EXPECT_EQ(m.design_apply(k, th), Eigen::Vector2d(0.3, -1.2));
    }
}

TEST(LmmToy, CovariateCovariance)
{
    const Index N = 10000, D = 5;
    Matrix X = ar1_covariates(N, D, 0.5, 9, 1);
    Matrix C = (X.transpose() * X) / static_cast<double>(N);
    double worst = 0.0;
    for (Index r = 0; r < D; ++r) {
        for (Index s = 0; s < D; ++s) {
            worst = std::max(worst, std::abs(C(r, s) - std::pow(0.5, std::abs(static_cast<double>(r - s)))));
        }
    }
    EXPECT_LT(worst, 0.05);
}

TEST(LmmToy, PosteriorSpecialCases)
{
    // No observations: posterior equals prior.
    LmmDataset d;
    d.n_subjects = 2;
    d.n_times = 0;
    d.n_covariates = 1;
    d.times.resize(2, 0);
    d.y.resize(2, 0);
    d.covariates.resize(2, 1);
    d.covariates << 0.5, -1.0;
    LmmToyModel m(d);
    Vector th(4);
    th << 1.0, 2.0, -1.0, 0.5;
    auto post = m.exact_posterior(th);
    for (Index k = 0; k < 2; ++k) {
        EXPECT_TRUE(post.mean[k].isApprox(m.design_apply(k, th)));
        EXPECT_TRUE(post.cov[k].isApprox(Eigen::Matrix2d::Identity()));
    }

    // θ = 0: mean (I+T)^{-1} ȳ.
    auto sim = simulate_lmm(3, 4, 2, 5);
    LmmToyModel m2(sim.data);
    auto p0 = m2.exact_posterior(Vector::Zero(6));
    for (Index k = 0; k < 3; ++k) {
        Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
        Eigen::Vector2d yb = Eigen::Vector2d::Zero();
        for (Index j = 0; j < 4; ++j) {
            Eigen::Vector2d t(1.0, sim.data.times(k, j));
            P += t * t.transpose();
            yb += sim.data.y(k, j) * t;
        }
        EXPECT_TRUE(p0.mean[k].isApprox(P.inverse() * yb, 1e-12));
        EXPECT_GT(p0.cov[k].determinant(), 0.0);
    }
}

TEST(LmmToy, PosteriorMomentsByQuadrature)
{
    LmmDataset d;
    d.n_subjects = 1;
    d.n_times = 1;
    d.n_covariates = 0;
    d.times.resize(1, 1);
    d.times << 2.0;
    d.y.resize(1, 1);
    d.y << 1.7;
    d.covariates.resize(1, 0);
    LmmToyModel m(d);
    Vector th(2);
    th << 0.4, -0.3;
    auto post = m.exact_posterior(th);

    auto density = [&](double a, double b) {
        const double r = 1.7 - a - 2.0 * b;
        return std::exp(-0.5 * r * r - 0.5 * (a - 0.4) * (a - 0.4) - 0.5 * (b + 0.3) * (b + 0.3));
    };
    auto moment = [&](auto g) {
        return oracle::integrate(
            [&](double a) { return oracle::integrate([&](double b) { return density(a, b) * g(a, b); }, -12.0, 12.0); },
            -12.0, 12.0);
    };
    const double Z = moment([](double, double) { return 1.0; });
    const double ma = moment([](double a, double) { return a; }) / Z;
    const double mb = moment([](double, double b) { return b; }) / Z;
    const double vaa = moment([&](double a, double) { return (a - ma) * (a - ma); }) / Z;
    const double vab = moment([&](double a, double b) { return (a - ma) * (b - mb); }) / Z;
    const double vbb = moment([&](double, double b) { return (b - mb) * (b - mb); }) / Z;
    EXPECT_NEAR(post.mean[0](0), ma, 1e-6 * std::max(1.0, std::abs(ma)));
    EXPECT_NEAR(post.mean[0](1), mb, 1e-6 * std::max(1.0, std::abs(mb)));
    EXPECT_NEAR(post.cov[0](0, 0), vaa, 1e-6);
    EXPECT_NEAR(post.cov[0](0, 1), vab, 1e-6);
    EXPECT_NEAR(post.cov[0](1, 1), vbb, 1e-6);
}

TEST(LmmToy, MeanStatMatchesMonteCarlo)
{
    auto sim = simulate_lmm(6, 8, 3, 8);
    LmmToyModel m(sim.data);
    std::mt19937_64 gen(1);
    const Vector th = random_theta(m.dim_theta(), gen, 0.5);
    const Vector exact = *m.exact_mean_stat(th);

    const long M = 1000000;
    const Index q = m.dim_stat();
    Vector sum = Vector::Zero(q), sumsq = Vector::Zero(q);
    Matrix z(2, m.n_subjects());
    for (long i = 0; i < M; ++i) {
        for (Index k = 0; k < m.n_subjects(); ++k) {
            CounterRng rng(77, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
            m.sample_exact(th, k, rng, z.col(k));
        }
        const Vector s = m.stat(z);
        sum += s;
        sumsq += s.cwiseProduct(s);
    }
    const Vector mean = sum / M;
    const Vector se = ((sumsq / M - mean.cwiseProduct(mean)) / M).cwiseSqrt();
    for (Index i = 0; i < q; ++i) {
        EXPECT_LE(std::abs(mean(i) - exact(i)), 3.0 * se(i) + 1e-12) << "coordinate " << i;
    }
}

TEST(LmmToy, MeanStatAffine)
{
    auto sim = simulate_lmm(5, 8, 4, 3);
    LmmToyModel m(sim.data);
    std::mt19937_64 gen(2);
    const Vector th = random_theta(m.dim_theta(), gen);
    const Vector s0 = *m.exact_mean_stat(Vector::Zero(m.dim_theta()));
    const Vector s1 = *m.exact_mean_stat(th);
    const Vector s2 = *m.exact_mean_stat(2.0 * th);
    // The linear block is affine in θ; the quadratic entry is not.
    const Index d = m.dim_theta();
    EXPECT_TRUE((s2.tail(d) - s0.tail(d)).isApprox(2.0 * (s1.tail(d) - s0.tail(d)), 1e-10));

    // Linear block at θ = 0 equals Σ X_k'(I+T_k)^{-1} ȳ_k.
    Vector expect = Vector::Zero(d);
    auto post = m.exact_posterior(Vector::Zero(d));
    for (Index k = 0; k < m.n_subjects(); ++k) m.design_transpose_add(k, post.mean[k], expect);
    EXPECT_TRUE(s0.tail(d).isApprox(expect, 1e-12));
}

TEST(LmmToy, CompleteLoglikMatchesDirectFormula)
{
    auto sim = simulate_lmm(7, 8, 4, 4);
    LmmToyModel m(sim.data);
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector th = random_theta(m.dim_theta(), gen);
        Matrix z(2, m.n_subjects());
        for (Index k = 0; k < m.n_subjects(); ++k) z.col(k) = random_theta(2, gen, 2.0);
        const double lib = m.phi(th) + m.stat(z).dot(m.psi(th));
        const double ref = complete_loglik_direct(m, th, z);
        EXPECT_NEAR(lib, ref, 1e-10 * std::max(1.0, std::abs(ref)));
    }
}

TEST(LmmToy, LoglikMatchesMarginalGaussian)
{
    auto sim = simulate_lmm(8, 8, 3, 6);
    LmmToyModel m(sim.data);
    std::mt19937_64 gen(4);
    const Vector base = random_theta(m.dim_theta(), gen);
    const double c = *m.exact_loglik(base) - oracle::lmm_marginal_loglik(sim.data, base);
    for (int rep = 0; rep < 10; ++rep) {
        const Vector th = random_theta(m.dim_theta(), gen);
        const double diff = *m.exact_loglik(th) - oracle::lmm_marginal_loglik(sim.data, th);
        EXPECT_NEAR(diff, c, 1e-8 * std::max(1.0, std::abs(c)));
    }
}

TEST(LmmToy, LoglikGradientAndConcavity)
{
    auto sim = simulate_lmm(10, 8, 5, 7);
    LmmToyModel m(sim.data);
    std::mt19937_64 gen(5);
    auto f = [&](const Vector& t) { return *m.exact_loglik(t); };
    for (int rep = 0; rep < 5; ++rep) {
        const Vector th = random_theta(m.dim_theta(), gen);
        const Vector g = gradient_surrogate(m, th, *m.exact_mean_stat(th));
        const Vector fd = oracle::fd_gradient(f, th, 1e-5);
        EXPECT_LE((g - fd).norm(), 1e-4 * (1.0 + g.norm()));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.loglik_hessian());
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-9);
    // ℓ is quadratic: ℓ(θ) - ℓ(0) = ½θ'Hθ + ∇ℓ(0)'θ.
    const Vector th = random_theta(m.dim_theta(), gen);
    const Vector g0 = gradient_surrogate(m, Vector::Zero(m.dim_theta()), *m.exact_mean_stat(Vector::Zero(m.dim_theta())));
    const double pieces = 0.5 * th.dot(m.loglik_hessian() * th) + g0.dot(th);
    EXPECT_NEAR(f(th) - f(Vector::Zero(m.dim_theta())), pieces, 1e-9 * std::max(1.0, std::abs(pieces)));
}

TEST(LmmToy, LipschitzConstant)
{
    auto sim = simulate_lmm(20, 8, 20, 8);
    LmmToyModel m(sim.data);
    const double L = *m.lipschitz();
    // Dense oracle from Σ X_k'X_k and Σ X_k'(I+T_k)^{-1}X_k assembled independently.
    const Index D = 20, p = D + 1, d = 2 * p;
    Matrix H = Matrix::Zero(d, d);
    auto post = m.exact_posterior(Vector::Zero(d));
    for (Index k = 0; k < 20; ++k) {
        Matrix X = Matrix::Zero(2, d);
        X(0, 0) = 1.0;
        X(1, p) = 1.0;
        for (Index r = 0; r < D; ++r) {
            X(0, 1 + r) = sim.data.covariates(k, r);
            X(1, p + 1 + r) = sim.data.covariates(k, r);
        }
        H += -X.transpose() * X + X.transpose() * post.cov[k] * X;
    }
    EXPECT_NEAR(L, oracle::spectral_norm_dense(H), 1e-8 * L);

    // Lipschitz bound on ∇ℓ.
    std::mt19937_64 gen(6);
    for (int rep = 0; rep < 100; ++rep) {
        const Vector a = random_theta(d, gen), b = random_theta(d, gen);
        const Vector ga = gradient_surrogate(m, a, *m.exact_mean_stat(a));
        const Vector gb = gradient_surrogate(m, b, *m.exact_mean_stat(b));
        EXPECT_LE((ga - gb).norm(), L * (a - b).norm() * (1.0 + 1e-10));
    }
}

TEST(LmmToy, LipschitzScaling)
{
    auto sim = simulate_lmm(6, 8, 3, 9);
    LmmToyModel m(sim.data);
    LmmDataset twice = sim.data;
    twice.n_subjects = 12;
    twice.times.resize(12, 8);
    twice.y.resize(12, 8);
    twice.covariates.resize(12, 3);
    twice.times << sim.data.times, sim.data.times;
    twice.y << sim.data.y, sim.data.y;
    twice.covariates << sim.data.covariates, sim.data.covariates;
    LmmToyModel m2(twice);
    EXPECT_NEAR(*m2.lipschitz(), 2.0 * *m.lipschitz(), 1e-10 * *m.lipschitz());

    // No observations and no covariates: X_k θ is only the intercepts and the
    // posterior equals the prior, so the Hessian vanishes.
    LmmDataset empty;
    empty.n_subjects = 3;
    empty.n_times = 0;
    empty.n_covariates = 0;
    empty.times.resize(3, 0);
    empty.y.resize(3, 0);
    empty.covariates.resize(3, 0);
    EXPECT_EQ(*LmmToyModel(empty).lipschitz(), 0.0);
}

TEST(LmmToy, ExactSamplerMoments)
{
    auto sim = simulate_lmm(3, 8, 2, 10);
    LmmToyModel m(sim.data);
    Vector th = sim.theta_star;
    auto post = m.exact_posterior(th);
    const long M = 100000;
    for (Index k = 0; k < 3; ++k) {
        Eigen::Vector2d s = Eigen::Vector2d::Zero();
        Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
        Vector z(2);
        for (long i = 0; i < M; ++i) {
            CounterRng rng(5, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
            m.sample_exact(th, k, rng, z);
            Eigen::Vector2d v(z(0), z(1));
            s += v;
            ss += v * v.transpose();
        }
        const Eigen::Vector2d mean = s / M;
        const Eigen::Matrix2d cov = ss / M - mean * mean.transpose();
        for (int i = 0; i < 2; ++i) {
            const double se = std::sqrt(post.cov[k](i, i) / M);
            EXPECT_LE(std::abs(mean(i) - post.mean[k](i)), 4.0 * se);
            EXPECT_NEAR(cov(i, i), post.cov[k](i, i), 0.03 * post.cov[k](i, i));
        }
        EXPECT_NEAR(cov(0, 1), post.cov[k](0, 1), 0.03 * std::sqrt(post.cov[k](0, 0) * post.cov[k](1, 1)));
    }
}

TEST(LmmToy, BatchStatSumMatchesPerDrawSums)
{
    auto sim = simulate_lmm(2, 8, 2, 11);
    LmmToyModel m(sim.data);
    const Vector th = sim.theta_star;
    const long R = 40000;
    for (long batch : {1L, 2L, 5L, 60L}) {
        for (Index k = 0; k < 2; ++k) {
            Eigen::Matrix<double, 3, 2> sum = Eigen::Matrix<double, 3, 2>::Zero(), sq = sum;
            Vector z(2), stat(3), acc(3);
            for (long r = 0; r < R; ++r) {
                CounterRng a(21, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r), 0);
                ASSERT_TRUE(m.sample_exact_stat_sum(th, k, batch, a, stat));
                acc.setZero();
                for (long j = 0; j < batch; ++j) {
                    CounterRng b(22, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r),
                                 static_cast<std::uint64_t>(j));
                    m.sample_exact(th, k, b, z);
                    Vector one(3);
                    m.subject_stat(k, z, one);
                    acc += one;
                }
                sum.col(0) += stat;
                sq.col(0) += stat.cwiseProduct(stat);
                sum.col(1) += acc;
                sq.col(1) += acc.cwiseProduct(acc);
            }
            for (Index i = 0; i < 3; ++i) {
                const double m0 = sum(i, 0) / R, m1 = sum(i, 1) / R;
                const double v0 = sq(i, 0) / R - m0 * m0, v1 = sq(i, 1) / R - m1 * m1;
                EXPECT_LE(std::abs(m0 - m1), 5.0 * std::sqrt((v0 + v1) / R)) << "m " << batch << " stat " << i;
                EXPECT_NEAR(v0 / v1, 1.0, 0.06) << "m " << batch << " stat " << i;
            }
        }
    }
}

TEST(LmmToy, ProjectionGuard)
{
    auto sim = simulate_lmm(3, 8, 2, 11);
    LmmToyModel m(sim.data);
    Vector th = Vector::Constant(m.dim_theta(), 1e5);
    EXPECT_TRUE(m.project(th));
    EXPECT_LT(th.norm(), LmmToyModel::theta_radius);
    Vector ok = Vector::Ones(m.dim_theta());
    EXPECT_FALSE(m.project(ok));
}

TEST(LmmToy, InvalidDatasets)
{
    EXPECT_THROW(simulate_lmm(0, 8, 2, 1), ArgumentError);
    LmmDataset d;
    d.n_subjects = 2;
    d.n_times = 1;
    d.times.resize(1, 1);
    d.y.resize(2, 1);
    d.covariates.resize(2, 0);
    EXPECT_THROW(LmmToyModel{d}, ArgumentError);
}
