#include <stochprox/coordinate_descent.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/penalty.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stochprox {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Sub-stream tags so that data pieces never share random numbers.
constexpr std::uint64_t kStreamCovariates = 11;
constexpr std::uint64_t kStreamThetaStar = 12;
constexpr std::uint64_t kStreamLatent = 13;
constexpr std::uint64_t kStreamNoise = 14;

} // namespace

void LmmDataset::validate() const
{
    if (n_subjects < 1) throw ArgumentError("toy dataset needs at least one subject");
    if (n_times < 0 || n_covariates < 0) throw ArgumentError("negative toy dimensions");
    if (times.rows() != n_subjects || times.cols() != n_times) throw ArgumentError("times has the wrong shape");
    if (y.rows() != n_subjects || y.cols() != n_times) throw ArgumentError("observations have the wrong shape");
    if (covariates.rows() != n_subjects || covariates.cols() != n_covariates) {
        throw ArgumentError("covariates have the wrong shape");
    }
    if (!times.allFinite() || !y.allFinite() || !covariates.allFinite()) {
        throw NumericError("toy dataset contains non-finite values");
    }
}

std::vector<double> lmm_default_times(Index J)
{
    static const double base[] = {0.25, 4, 6, 8, 10, 12, 14, 16};
    std::vector<double> t;
    for (Index j = 0; j < J; ++j) {
        t.push_back(j < 8 ? base[j] : 16.0 + 2.0 * static_cast<double>(j - 7));
    }
    return t;
}

Matrix ar1_covariates(Index N, Index D, double rho, std::uint64_t seed, std::uint64_t stream)
{
    Matrix out(N, D);
    if (D == 0) return out;
    Matrix gamma(D, D);
    for (Index r = 0; r < D; ++r) {
        for (Index s = 0; s < D; ++s) gamma(r, s) = std::pow(rho, std::abs(static_cast<double>(r - s)));
    }
    const Eigen::LLT<Matrix> llt(gamma);
    if (llt.info() != Eigen::Success) throw NumericError("covariate covariance is not positive definite");
    const Matrix L = llt.matrixL();
    Vector eps(D);
    for (Index k = 0; k < N; ++k) {
        CounterRng rng(seed, stream, static_cast<std::uint64_t>(k));
        for (Index r = 0; r < D; ++r) eps[r] = rng.normal();
        out.row(k) = (L * eps).transpose();
    }
    return out;
}

Vector lmm_theta_star(Index D, std::uint64_t seed)
{
    Vector theta = Vector::Zero(2 * (D + 1));
    theta[0] = 1.0;
    theta[D + 1] = 1.0;
    const Index active = std::min<Index>(6, D);
    for (Index block = 0; block < 2; ++block) {
        CounterRng rng(seed, kStreamThetaStar, static_cast<std::uint64_t>(block));
        std::vector<Index> idx(static_cast<std::size_t>(D));
        std::iota(idx.begin(), idx.end(), Index{0});
        // Partial Fisher-Yates: the first `active` entries are a uniform subset.
        for (Index i = 0; i < active; ++i) {
            const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(D - i)));
            std::swap(idx[i], idx[j]);
        }
        std::sort(idx.begin(), idx.begin() + active);
        for (Index i = 0; i < active; ++i) {
            theta[block * (D + 1) + 1 + idx[i]] = 0.5 + rng.uniform();
        }
    }
    return theta;
}

LmmSimulation simulate_lmm(Index N, Index J, Index D, std::uint64_t seed)
{
    if (N < 1 || J < 0 || D < 0) throw ArgumentError("simulate_lmm: invalid dimensions");
    LmmSimulation sim;
    LmmDataset& data = sim.data;
    data.n_subjects = N;
    data.n_times = J;
    data.n_covariates = D;
    data.times.resize(N, J);
    const auto t = lmm_default_times(J);
    for (Index k = 0; k < N; ++k) {
        for (Index j = 0; j < J; ++j) data.times(k, j) = t[j];
    }
    data.covariates = ar1_covariates(N, D, 0.5, seed, kStreamCovariates);
    sim.theta_star = lmm_theta_star(D, seed);
    const Vector& th = sim.theta_star;
    data.y.resize(N, J);
    for (Index k = 0; k < N; ++k) {
        const auto x = data.covariates.row(k);
        const double m0 = th[0] + x.dot(th.segment(1, D));
        const double m1 = th[D + 1] + x.dot(th.segment(D + 2, D));
        CounterRng latent(seed, kStreamLatent, static_cast<std::uint64_t>(k));
        const double z0 = m0 + latent.normal();
        const double z1 = m1 + latent.normal();
        CounterRng noise(seed, kStreamNoise, static_cast<std::uint64_t>(k));
        for (Index j = 0; j < J; ++j) {
            data.y(k, j) = z0 + z1 * data.times(k, j) + noise.normal();
        }
    }
    return sim;
}

LmmToyModel::LmmToyModel(LmmDataset data) : data_(std::move(data))
{
    data_.validate();
    const Index N = data_.n_subjects;
    const Index D = data_.n_covariates;
    dim_ = 2 * (D + 1);
    theta_layout_.add("intercept_block", D + 1);
    theta_layout_.add("slope_block", D + 1);
    stat_layout_.add("quadratic", 1);
    stat_layout_.add("linear", dim_);

    precision_.resize(N);
    cov_.resize(N);
    cov_chol_.resize(N);
    ybar_.resize(N);
    for (Index k = 0; k < N; ++k) {
        Eigen::Matrix2d T = Eigen::Matrix2d::Zero();
        Eigen::Vector2d yb = Eigen::Vector2d::Zero();
        for (Index j = 0; j < data_.n_times; ++j) {
            const Eigen::Vector2d tb(1.0, data_.times(k, j));
            T += tb * tb.transpose();
            yb += data_.y(k, j) * tb;
            y_sq_sum_ += data_.y(k, j) * data_.y(k, j);
        }
        precision_[k] = Eigen::Matrix2d::Identity() + T;
        const Eigen::LLT<Eigen::Matrix2d> llt(precision_[k]);
        if (llt.info() != Eigen::Success) throw NumericError("I + T_k is singular");
        cov_[k] = llt.solve(Eigen::Matrix2d::Identity());
        cov_[k] = 0.5 * (cov_[k] + cov_[k].transpose()).eval();
        cov_chol_[k] = cov_[k].llt().matrixL();
        ybar_[k] = yb;
    }

    // Block structure: X_k'MX_k = [M00 x̄x̄', M01 x̄x̄'; M10 x̄x̄', M11 x̄x̄'].
    const Index p = D + 1;
    gram_ = Matrix::Zero(dim_, dim_);
    hessian_ = Matrix::Zero(dim_, dim_);
    Matrix xx(p, p);
    Vector xbar(p);
    for (Index k = 0; k < N; ++k) {
        xbar[0] = 1.0;
        xbar.tail(D) = data_.covariates.row(k).transpose();
        xx.noalias() = xbar * xbar.transpose();
        const Eigen::Matrix2d M = Eigen::Matrix2d::Identity() - cov_[k];
        gram_.topLeftCorner(p, p) += xx;
        gram_.bottomRightCorner(p, p) += xx;
        hessian_.topLeftCorner(p, p) -= M(0, 0) * xx;
        hessian_.topRightCorner(p, p) -= M(0, 1) * xx;
        hessian_.bottomLeftCorner(p, p) -= M(1, 0) * xx;
        hessian_.bottomRightCorner(p, p) -= M(1, 1) * xx;
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian_, Eigen::EigenvaluesOnly);
    lipschitz_ = eig.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::Vector2d LmmToyModel::design_apply(Index k, const Vector& theta) const
{
    const Index D = data_.n_covariates;
    const auto x = data_.covariates.row(k);
    return {theta[0] + x.dot(theta.segment(1, D)), theta[D + 1] + x.dot(theta.segment(D + 2, D))};
}

void LmmToyModel::design_transpose_add(Index k, const Eigen::Vector2d& v, Vector& out) const
{
    const Index D = data_.n_covariates;
    const auto x = data_.covariates.row(k).transpose();
    out[0] += v[0];
    out.segment(1, D) += v[0] * x;
    out[D + 1] += v[1];
    out.segment(D + 2, D) += v[1] * x;
}

double LmmToyModel::phi(const Vector& theta) const
{
    return -0.5 * theta.dot(gram_ * theta) - 0.5 * y_sq_sum_;
}

Vector LmmToyModel::grad_phi(const Vector& theta) const
{
    return -(gram_ * theta);
}

Vector LmmToyModel::psi(const Vector& theta) const
{
    Vector out(dim_ + 1);
    out[0] = 1.0;
    out.tail(dim_) = theta;
    return out;
}

Matrix LmmToyModel::psi_jacobian(const Vector&) const
{
    Matrix out = Matrix::Zero(dim_, dim_ + 1);
    out.rightCols(dim_).setIdentity();
    return out;
}

Vector LmmToyModel::apply_psi(const Vector&, const Vector& s) const
{
    if (s.size() != dim_ + 1) throw ArgumentError("statistic dimension mismatch");
    return s.tail(dim_);
}

Vector LmmToyModel::complete_information_diag(const Vector&, const Vector&) const
{
    return gram_.diagonal();
}

Vector LmmToyModel::complete_information_rowsum(const Vector&, const Vector&) const
{
    return gram_.cwiseAbs().rowwise().sum();
}

void LmmToyModel::subject_stat(Index k, const Eigen::Ref<const Vector>& zk, Eigen::Ref<Vector> out) const
{
    const Eigen::Vector2d z(zk[0], zk[1]);
    out[0] = z.dot(precision_[k] * z) - 2.0 * z.dot(ybar_[k]);
    out[1] = z[0];
    out[2] = z[1];
}

Vector LmmToyModel::assemble_stat(const Matrix& summaries) const
{
    if (summaries.rows() != 3 || summaries.cols() != n_subjects()) {
        throw ArgumentError("toy summaries have the wrong shape");
    }
    Vector s = Vector::Zero(dim_ + 1);
    Vector lin = Vector::Zero(dim_);
    for (Index k = 0; k < n_subjects(); ++k) {
        s[0] -= 0.5 * summaries(0, k);
        design_transpose_add(k, Eigen::Vector2d(summaries(1, k), summaries(2, k)), lin);
    }
    s.tail(dim_) = lin;
    return s;
}

SubjectPrior LmmToyModel::subject_prior(const Vector& theta, Index k) const
{
    const Eigen::Vector2d m = design_apply(k, theta);
    return {Vector(m), Vector::Ones(2)};
}

double LmmToyModel::subject_loglik(const Vector&, Index k, const Eigen::Ref<const Vector>& zk) const
{
    double ss = 0.0;
    for (Index j = 0; j < data_.n_times; ++j) {
        const double r = data_.y(k, j) - zk[0] - zk[1] * data_.times(k, j);
        ss += r * r;
    }
    return -0.5 * ss - 0.5 * static_cast<double>(data_.n_times) * kLog2Pi;
}

void LmmToyModel::sample_exact(const Vector& theta, Index k, CounterRng& rng, Eigen::Ref<Vector> out) const
{
    const Eigen::Vector2d mean = cov_[k] * (ybar_[k] + design_apply(k, theta));
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    const Eigen::Vector2d z = mean + cov_chol_[k] * Eigen::Vector2d(e0, e1);
    out[0] = z[0];
    out[1] = z[1];
}

bool LmmToyModel::sample_exact_stat_sum(const Vector& theta, Index k, long m, CounterRng& rng,
                                        Eigen::Ref<Vector> out) const
{
    if (m < 1) throw ArgumentError("batch size must be >= 1");
    const Eigen::Vector2d mean = cov_[k] * (ybar_[k] + design_apply(k, theta));
    const Eigen::Matrix2d& C = cov_chol_[k];
    // z_i = μ + C e_i; Σ e_i = √m g, Σ e_i e_i' = g g' + W.
    const Eigen::Vector2d g(rng.normal(), rng.normal());
    Eigen::Matrix2d W = Eigen::Matrix2d::Zero();
    if (m > 1) {
        const auto nu = static_cast<double>(m - 1);
        const double c1 = std::sqrt(std::chi_squared_distribution<double>(nu)(rng));
        const double c2 = m > 2 ? std::sqrt(std::chi_squared_distribution<double>(nu - 1.0)(rng)) : 0.0;
        Eigen::Matrix2d A;
        A << c1, 0.0, rng.normal(), c2;
        W = A * A.transpose();
    }
    const auto md = static_cast<double>(m);
    const Eigen::Vector2d ce = std::sqrt(md) * (C * g);
    const Eigen::Vector2d zsum = md * mean + ce;
    const Eigen::Matrix2d zz = md * mean * mean.transpose() + mean * ce.transpose() + ce * mean.transpose() +
                               C * (g * g.transpose() + W) * C.transpose();
    out[0] = (precision_[k] * zz).trace() - 2.0 * ybar_[k].dot(zsum);
    out[1] = zsum[0];
    out[2] = zsum[1];
    return true;
}

LmmPosterior LmmToyModel::exact_posterior(const Vector& theta) const
{
    validate_theta(theta);
    LmmPosterior post;
    for (Index k = 0; k < n_subjects(); ++k) {
        post.mean.push_back(cov_[k] * (ybar_[k] + design_apply(k, theta)));
        post.cov.push_back(cov_[k]);
    }
    return post;
}

std::optional<Vector> LmmToyModel::exact_mean_stat(const Vector& theta) const
{
    validate_theta(theta);
    Vector s = Vector::Zero(dim_ + 1);
    Vector lin = Vector::Zero(dim_);
    for (Index k = 0; k < n_subjects(); ++k) {
        const Eigen::Vector2d b = ybar_[k] + design_apply(k, theta);
        const Eigen::Vector2d m = cov_[k] * b;
        // E[z'(I+T)z] = tr((I+T)(P + mm')) = 2 + b'Pb.
        s[0] -= 0.5 * (2.0 + b.dot(m) - 2.0 * ybar_[k].dot(m));
        design_transpose_add(k, m, lin);
    }
    s.tail(dim_) = lin;
    return s;
}

std::optional<double> LmmToyModel::exact_loglik(const Vector& theta) const
{
    validate_theta(theta);
    double value = -0.5 * theta.dot(gram_ * theta);
    for (Index k = 0; k < n_subjects(); ++k) {
        const Eigen::Vector2d b = ybar_[k] + design_apply(k, theta);
        value += 0.5 * b.dot(cov_[k] * b);
    }
    return value;
}

Vector LmmToyModel::maximize_surrogate(const Vector& s, const PenaltySpec& penalty, const Vector& start,
                                       const CoordinateDescentOptions& options) const
{
    if (s.size() != dim_stat()) throw ArgumentError("statistic dimension mismatch");
    penalty.validate(dim_);
    return maximize_penalized_quadratic(gram_, s.tail(dim_), penalty, 0, start, {}, options).x;
}

std::vector<bool> LmmToyModel::default_penalty_mask() const
{
    return mask_all_except(dim_, {0, data_.n_covariates + 1});
}

bool LmmToyModel::project(Vector& theta) const
{
    const double norm = theta.norm();
    if (norm < theta_radius) return false;
    theta *= (theta_radius * (1.0 - 1e-12)) / norm;
    return true;
}

} // namespace stochprox
