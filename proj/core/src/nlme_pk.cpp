#include <stochprox/coordinate_descent.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/nlme_pk.hpp>
#include <stochprox/penalty.hpp>

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stochprox {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kEigenGap = 1e-8;

constexpr std::uint64_t kStreamCovariates = 21;
constexpr std::uint64_t kStreamLatent = 22;
constexpr std::uint64_t kStreamNoise = 23;

// ∫_0^t e^{λ(t-u)} e^{-ka u} du = (e^{λt} - e^{-ka t}) / (ka + λ).
double convolution(double lambda, double ka, double t)
{
    const double rate = ka + lambda;
    const double x = rate * t;
    if (x == 0.0) return std::exp(-ka * t) * t;
    if (x > 50.0) return (std::exp(lambda * t) - std::exp(-ka * t)) / rate;
    return std::exp(-ka * t) * t * std::expm1(x) / x;
}

} // namespace

PkAmounts pk_amounts_ode(double dose, double vc, double vp, double q, double cl, double ka, double t,
                         double abs_tol, double rel_tol)
{
    using State = std::array<double, 3>;
    namespace odeint = boost::numeric::odeint;
    const double k10 = cl / vc;
    const double k12 = q / vc;
    const double k21 = q / vp;
    State x{dose, 0.0, 0.0};
    if (t <= 0.0) return {x[0], x[1], x[2]};
    auto rhs = [&](const State& s, State& ds, double) {
        ds[0] = -ka * s[0];
        ds[1] = ka * s[0] + k21 * s[2] - (k12 + k10) * s[1];
        ds[2] = k12 * s[1] - k21 * s[2];
    };
    auto stepper = odeint::make_controlled(abs_tol, rel_tol, odeint::runge_kutta_dopri5<State>());
    odeint::integrate_adaptive(stepper, rhs, x, 0.0, t, std::min(1e-3, t / 10.0));
    return {x[0], x[1], x[2]};
}

PkAmounts pk_amounts(double dose, double vc, double vp, double q, double cl, double ka, double t)
{
    if (t < 0.0) throw ArgumentError("pk_amounts: negative time");
    const double k10 = cl / vc;
    const double k12 = q / vc;
    const double k21 = q / vp;
    if (!std::isfinite(k10) || !std::isfinite(k12) || !std::isfinite(k21) || !std::isfinite(ka)) {
        throw NumericError("pk_amounts: non-finite rate constants");
    }
    if (t == 0.0) return {dose, 0.0, 0.0};
    const double s = k10 + k12 + k21;
    const double disc = (k10 - k21) * (k10 - k21) + k12 * k12 + 2.0 * k12 * (k10 + k21);
    const double a = 0.5 * (s + std::sqrt(std::max(disc, 0.0)));
    const double b = a > 0.0 ? k10 * k21 / a : 0.0;
    const double l1 = -a;
    const double l2 = -b;
    const double gap = l2 - l1;
    if (!(gap > kEigenGap * std::max(std::abs(l1), std::abs(l2)))) {
        return pk_amounts_ode(dose, vc, vp, q, cl, ka, t);
    }
    const double e1 = convolution(l1, ka, t);
    const double e2 = convolution(l2, ka, t);
    const double w1 = k10 + k12 + l1;
    const double w2 = k10 + k12 + l2;
    PkAmounts out;
    out.depot = dose * std::exp(-ka * t);
    // Spectral projectors of the 2×2 block applied to e_1.
    out.central = ka * dose * (w2 * e1 - w1 * e2) / gap;
    out.peripheral = ka * dose * k12 * (e2 - e1) / gap;
    return out;
}

double pk_concentration(double dose, const Eigen::Ref<const Vector>& z, double t)
{
    if (z.size() != kPkDims) throw ArgumentError("PK latent vector must have 5 entries");
    const double vc = std::exp(z[0]);
    const PkAmounts a = pk_amounts(dose, vc, std::exp(z[1]), std::exp(z[2]), std::exp(z[3]),
                                   std::exp(z[4]), t);
    const double f = a.central / vc;
    if (!std::isfinite(f)) throw NumericError("pk_concentration: non-finite value");
    return std::max(f, 0.0);
}

void pk_concentrations(double dose, const Eigen::Ref<const Vector>& z,
                       const Eigen::Ref<const Vector>& times, Eigen::Ref<Vector> out)
{
    if (z.size() != kPkDims) throw ArgumentError("PK latent vector must have 5 entries");
    const double vc = std::exp(z[0]);
    const double vp = std::exp(z[1]);
    const double q = std::exp(z[2]);
    const double cl = std::exp(z[3]);
    const double ka = std::exp(z[4]);
    for (Index j = 0; j < times.size(); ++j) {
        const double f = pk_amounts(dose, vc, vp, q, cl, ka, times[j]).central / vc;
        if (!std::isfinite(f)) throw NumericError("pk_concentration: non-finite value");
        out[j] = std::max(f, 0.0);
    }
}

void PkDataset::validate() const
{
    if (n_subjects < 1 || n_times < 1 || n_covariates < 0) throw ArgumentError("invalid PK dimensions");
    if (!(dose > 0.0)) throw ArgumentError("PK dose must be positive");
    if (times.rows() != n_subjects || times.cols() != n_times) throw ArgumentError("times has the wrong shape");
    if (y.rows() != n_subjects || y.cols() != n_times) throw ArgumentError("observations have the wrong shape");
    if (covariates.rows() != n_subjects || covariates.cols() != n_covariates) {
        throw ArgumentError("covariates have the wrong shape");
    }
    if (!times.allFinite() || !y.allFinite() || !covariates.allFinite()) {
        throw NumericError("PK dataset contains non-finite values");
    }
    for (Index k = 0; k < n_subjects; ++k) {
        if (times(k, 0) < 0.0) throw ArgumentError("PK times must be nonnegative");
        for (Index j = 1; j < n_times; ++j) {
            if (!(times(k, j) > times(k, j - 1))) throw ArgumentError("PK times must be strictly increasing");
        }
    }
}

std::vector<double> pk_default_times(Index J)
{
    static const double base[] = {0.5, 1, 1.5, 2, 3, 4, 6, 8, 12, 16, 24, 36};
    std::vector<double> t;
    for (Index j = 0; j < J; ++j) {
        t.push_back(j < 12 ? base[j] : 36.0 + 12.0 * static_cast<double>(j - 11));
    }
    return t;
}

const std::array<double, kPkDims>& pk_population_intercepts()
{
    static const std::array<double, kPkDims> v{6.61, 6.96, 5.77, 5.42, -0.51};
    return v;
}

const std::array<double, kPkDims>& pk_population_omega()
{
    static const std::array<double, kPkDims> v{0.16, 0.16, 0.16, 0.04, 0.04};
    return v;
}

std::vector<Index> pk_true_effect_indices(Index D)
{
    if (D < 1) return {};
    const Index p = D + 1;
    return {std::min<Index>(3, D), 3 * p + std::min<Index>(8, D)};
}

PkSimulation simulate_pk(Index N, Index J, Index D, std::uint64_t seed, const PkSimulationOptions& options)
{
    if (N < 1 || J < 1 || D < 0) throw ArgumentError("simulate_pk: invalid dimensions");
    if (!(options.dose > 0.0)) throw ArgumentError("simulate_pk: dose must be positive");
    if (!(options.sigma_fraction >= 0.0)) throw ArgumentError("simulate_pk: sigma fraction must be >= 0");
    const Index p = D + 1;
    PkSimulation sim;
    PkDataset& data = sim.data;
    data.n_subjects = N;
    data.n_times = J;
    data.n_covariates = D;
    data.dose = options.dose;
    const auto times = options.times.empty() ? pk_default_times(J) : options.times;
    if (static_cast<Index>(times.size()) != J) throw ArgumentError("simulate_pk: times length must equal J");
    data.times.resize(N, J);
    for (Index k = 0; k < N; ++k) {
        for (Index j = 0; j < J; ++j) data.times(k, j) = times[j];
    }
    data.covariates = ar1_covariates(N, D, 0.5, seed, kStreamCovariates);

    sim.mu = Vector::Zero(kPkDims * p);
    sim.omega.resize(kPkDims);
    for (Index r = 0; r < kPkDims; ++r) {
        sim.mu[r * p] = pk_population_intercepts()[r];
        sim.omega[r] = pk_population_omega()[r];
    }
    sim.true_effects = pk_true_effect_indices(D);
    for (Index idx : sim.true_effects) sim.mu[idx] = 1.0;

    Matrix f(N, J);
    Vector z(kPkDims);
    for (Index k = 0; k < N; ++k) {
        CounterRng rng(seed, kStreamLatent, static_cast<std::uint64_t>(k));
        for (Index r = 0; r < kPkDims; ++r) {
            const double mean = sim.mu[r * p] + data.covariates.row(k).dot(sim.mu.segment(r * p + 1, D));
            z[r] = mean + std::sqrt(sim.omega[r]) * rng.normal();
        }
        Vector fk(J);
        pk_concentrations(data.dose, z, data.times.row(k).transpose(), fk);
        f.row(k) = fk.transpose();
    }
    sim.sigma = options.sigma_fraction * f.mean();
    data.y.resize(N, J);
    for (Index k = 0; k < N; ++k) {
        CounterRng rng(seed, kStreamNoise, static_cast<std::uint64_t>(k));
        for (Index j = 0; j < J; ++j) data.y(k, j) = f(k, j) + sim.sigma * rng.normal();
    }
    const PkModel model(data);
    sim.theta_tilde = model.to_tilde(sim.mu, sim.omega, std::max(sim.sigma, PkModel::domain_floor));
    return sim;
}

PkModel::PkModel(PkDataset data, PkModelSpec spec) : data_(std::move(data)), spec_(std::move(spec))
{
    data_.validate();
    if (spec_.covariate_coords.empty()) spec_.covariate_coords.assign(kPkDims, true);
    if (spec_.pinned_omega.empty()) spec_.pinned_omega.assign(kPkDims, std::numeric_limits<double>::quiet_NaN());
    if (static_cast<Index>(spec_.covariate_coords.size()) != kPkDims ||
        static_cast<Index>(spec_.pinned_omega.size()) != kPkDims) {
        throw ArgumentError("PK model masks must have one entry per latent coordinate");
    }
    for (double w : spec_.pinned_omega) {
        if (!std::isnan(w) && !(w > 0.0)) throw ArgumentError("pinned variances must be positive");
    }
    for (Index r = 0; r < kPkDims; ++r) {
        if (!(spec_.initial_omega[r] > 0.0)) throw ArgumentError("initial variances must be positive");
    }
    if (!(spec_.omega_floor > 0.0)) throw ArgumentError("omega_floor must be positive");
    const Index N = data_.n_subjects;
    const Index p = block_size();
    static const char* names[kPkDims] = {"mu_log_vc", "mu_log_vp", "mu_log_q", "mu_log_cl", "mu_log_ka"};
    for (Index r = 0; r < kPkDims; ++r) theta_layout_.add(names[r], p);
    theta_layout_.add("Sigma", kPkDims);
    theta_layout_.add("sigma", 1);
    for (Index k = 0; k < N; ++k) stat_layout_.add("S1_" + std::to_string(k), kPkDims, k);
    stat_layout_.add("S2", kPkDims * kPkDims);
    stat_layout_.add("S3", 1);

    design_.resize(N, p);
    design_.col(0).setOnes();
    design_.rightCols(data_.n_covariates) = data_.covariates;
    gram_ = design_.transpose() * design_;
}

bool PkModel::pinned(Index r) const
{
    return !std::isnan(spec_.pinned_omega[r]);
}

Vector PkModel::to_tilde(const Vector& mu, const Vector& omega, double sigma) const
{
    const Index p = block_size();
    if (mu.size() != kPkDims * p || omega.size() != kPkDims) throw ArgumentError("to_tilde: dimension mismatch");
    Vector theta(dim_theta());
    for (Index r = 0; r < kPkDims; ++r) {
        if (!(omega[r] > 0.0)) throw ArgumentError("variances must be positive");
        const double s = 1.0 / std::sqrt(omega[r]);
        theta.segment(r * p, p) = s * mu.segment(r * p, p);
        theta[sigma_offset() + r] = s;
    }
    theta[residual_index()] = sigma;
    return theta;
}

void PkModel::from_tilde(const Vector& theta, Vector& mu, Vector& omega, double& sigma) const
{
    validate_theta(theta);
    const Index p = block_size();
    mu.resize(kPkDims * p);
    omega.resize(kPkDims);
    for (Index r = 0; r < kPkDims; ++r) {
        const double s = theta[sigma_offset() + r];
        mu.segment(r * p, p) = theta.segment(r * p, p) / s;
        omega[r] = 1.0 / (s * s);
    }
    sigma = theta[residual_index()];
}

Vector PkModel::linear_predictor(const Vector& theta, Index k) const
{
    const Index p = block_size();
    Vector eta(kPkDims);
    for (Index r = 0; r < kPkDims; ++r) eta[r] = design_.row(k).dot(theta.segment(r * p, p));
    return eta;
}

void PkModel::validate_theta(const Vector& theta) const
{
    LatentModel::validate_theta(theta);
    for (Index r = 0; r < kPkDims; ++r) {
        if (!(theta[sigma_offset() + r] > 0.0)) throw ArgumentError("Sigma entries must be positive");
    }
    if (!(theta[residual_index()] > 0.0)) throw ArgumentError("residual sd must be positive");
}

double PkModel::phi(const Vector& theta) const
{
    validate_theta(theta);
    const Index p = block_size();
    const auto N = static_cast<double>(data_.n_subjects);
    double value = -static_cast<double>(data_.n_obs()) * std::log(theta[residual_index()]);
    for (Index r = 0; r < kPkDims; ++r) {
        const auto m = theta.segment(r * p, p);
        value += N * std::log(theta[sigma_offset() + r]) - 0.5 * m.dot(gram_ * m);
    }
    return value;
}

Vector PkModel::grad_phi(const Vector& theta) const
{
    validate_theta(theta);
    const Index p = block_size();
    const auto N = static_cast<double>(data_.n_subjects);
    Vector g(dim_theta());
    for (Index r = 0; r < kPkDims; ++r) {
        g.segment(r * p, p) = -(gram_ * theta.segment(r * p, p));
        g[sigma_offset() + r] = N / theta[sigma_offset() + r];
    }
    g[residual_index()] = -static_cast<double>(data_.n_obs()) / theta[residual_index()];
    return g;
}

Vector PkModel::psi(const Vector& theta) const
{
    validate_theta(theta);
    const Index N = data_.n_subjects;
    Vector out = Vector::Zero(dim_stat());
    for (Index k = 0; k < N; ++k) {
        const Vector eta = linear_predictor(theta, k);
        for (Index r = 0; r < kPkDims; ++r) out[k * kPkDims + r] = theta[sigma_offset() + r] * eta[r];
    }
    const Index s2 = N * kPkDims;
    for (Index r = 0; r < kPkDims; ++r) {
        const double s = theta[sigma_offset() + r];
        out[s2 + r * kPkDims + r] = -0.5 * s * s;
    }
    const double sig = theta[residual_index()];
    out[dim_stat() - 1] = -0.5 / (sig * sig);
    return out;
}

Matrix PkModel::psi_jacobian(const Vector& theta) const
{
    validate_theta(theta);
    const Index N = data_.n_subjects;
    const Index p = block_size();
    Matrix J = Matrix::Zero(dim_theta(), dim_stat());
    for (Index k = 0; k < N; ++k) {
        const Vector eta = linear_predictor(theta, k);
        for (Index r = 0; r < kPkDims; ++r) {
            const Index col = k * kPkDims + r;
            J.block(r * p, col, p, 1) = theta[sigma_offset() + r] * design_.row(k).transpose();
            J(sigma_offset() + r, col) = eta[r];
        }
    }
    const Index s2 = N * kPkDims;
    for (Index r = 0; r < kPkDims; ++r) {
        J(sigma_offset() + r, s2 + r * kPkDims + r) = -theta[sigma_offset() + r];
    }
    const double sig = theta[residual_index()];
    J(residual_index(), dim_stat() - 1) = 1.0 / (sig * sig * sig);
    return J;
}

Vector PkModel::apply_psi(const Vector& theta, const Vector& s) const
{
    validate_theta(theta);
    if (s.size() != dim_stat()) throw ArgumentError("statistic dimension mismatch");
    const Index N = data_.n_subjects;
    const Index p = block_size();
    // B: N × R matrix of the S_1k blocks.
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> B(
        s.data(), N, kPkDims);
    const Matrix XtB = design_.transpose() * B; // p × R
    Vector out(dim_theta());
    const Index s2 = N * kPkDims;
    for (Index r = 0; r < kPkDims; ++r) {
        const double sr = theta[sigma_offset() + r];
        const auto m = theta.segment(r * p, p);
        out.segment(r * p, p) = sr * XtB.col(r);
        out[sigma_offset() + r] = XtB.col(r).dot(m) - sr * s[s2 + r * kPkDims + r];
    }
    const double sig = theta[residual_index()];
    out[residual_index()] = s[dim_stat() - 1] / (sig * sig * sig);
    return out;
}

Vector PkModel::complete_information_diag(const Vector& theta, const Vector& s) const
{
    validate_theta(theta);
    const Index p = block_size();
    const auto N = static_cast<double>(data_.n_subjects);
    const Index s2 = data_.n_subjects * kPkDims;
    Vector h(dim_theta());
    for (Index r = 0; r < kPkDims; ++r) {
        h.segment(r * p, p) = gram_.diagonal();
        const double sr = theta[sigma_offset() + r];
        h[sigma_offset() + r] = N / (sr * sr) + s[s2 + r * kPkDims + r];
    }
    // Observed curvature in σ, 3 S_3/σ⁴ - n/σ², is negative for σ² > 3 S_3/n;
    // its expectation under the model, 2n/σ², is used instead.
    const double sig = theta[residual_index()];
    h[residual_index()] = 2.0 * static_cast<double>(data_.n_obs()) / (sig * sig);
    return h;
}

Vector PkModel::complete_information_rowsum(const Vector& theta, const Vector& s) const
{
    Vector h = complete_information_diag(theta, s);
    const Index N = data_.n_subjects;
    const Index p = block_size();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> B(
        s.data(), N, kPkDims);
    // Off-diagonal parts: Gram within μ̃_(r), Σ_k b_kr x̄_k between μ̃_(r) and Σ_rr.
    const Vector offdiag_gram = gram_.cwiseAbs().rowwise().sum() - gram_.diagonal().cwiseAbs();
    const Matrix cross = (design_.transpose() * B).cwiseAbs();
    for (Index r = 0; r < kPkDims; ++r) {
        h.segment(r * p, p) += offdiag_gram + cross.col(r);
        h[sigma_offset() + r] += cross.col(r).sum();
    }
    return h;
}

double PkModel::subject_sse(Index k, const Eigen::Ref<const Vector>& zk) const
{
    Vector f(data_.n_times);
    pk_concentrations(data_.dose, zk, data_.times.row(k).transpose(), f);
    return (data_.y.row(k).transpose() - f).squaredNorm();
}

void PkModel::subject_stat(Index k, const Eigen::Ref<const Vector>& zk, Eigen::Ref<Vector> out) const
{
    out.head(kPkDims) = zk;
    for (Index a = 0; a < kPkDims; ++a) {
        for (Index b = 0; b < kPkDims; ++b) out[kPkDims + a * kPkDims + b] = zk[a] * zk[b];
    }
    out[kPkDims + kPkDims * kPkDims] = subject_sse(k, zk);
}

Vector PkModel::assemble_stat(const Matrix& summaries) const
{
    const Index N = data_.n_subjects;
    if (summaries.rows() != subject_stat_dim() || summaries.cols() != N) {
        throw ArgumentError("PK summaries have the wrong shape");
    }
    Vector s = Vector::Zero(dim_stat());
    const Index s2 = N * kPkDims;
    for (Index k = 0; k < N; ++k) {
        s.segment(k * kPkDims, kPkDims) = summaries.col(k).head(kPkDims);
        s.segment(s2, kPkDims * kPkDims) += summaries.col(k).segment(kPkDims, kPkDims * kPkDims);
        s[dim_stat() - 1] += summaries(kPkDims + kPkDims * kPkDims, k);
    }
    return s;
}

SubjectPrior PkModel::subject_prior(const Vector& theta, Index k) const
{
    const Vector eta = linear_predictor(theta, k);
    SubjectPrior prior{Vector(kPkDims), Vector(kPkDims)};
    for (Index r = 0; r < kPkDims; ++r) {
        const double sr = theta[sigma_offset() + r];
        prior.mean[r] = eta[r] / sr;
        prior.sd[r] = 1.0 / sr;
    }
    return prior;
}

double PkModel::subject_loglik(const Vector& theta, Index k, const Eigen::Ref<const Vector>& zk) const
{
    const double sig = theta[residual_index()];
    double sse = 0.0;
    try {
        sse = subject_sse(k, zk);
    } catch (const NumericError&) {
        return -std::numeric_limits<double>::infinity();
    }
    const auto J = static_cast<double>(data_.n_times);
    return -J * std::log(sig) - 0.5 * sse / (sig * sig) - 0.5 * J * kLog2Pi;
}

Vector PkModel::maximize_surrogate(const Vector& s, const PenaltySpec& penalty, const Vector& start,
                                   const CoordinateDescentOptions& options) const
{
    if (s.size() != dim_stat()) throw ArgumentError("statistic dimension mismatch");
    penalty.validate(dim_theta());
    if (penalty.kind == PenaltyKind::box) throw ArgumentError("the PK M-step does not support box penalties");
    validate_theta(start);
    const Index N = data_.n_subjects;
    const Index p = block_size();
    const auto Nd = static_cast<double>(N);
    const auto fixed = fixed_mask();
    Vector theta = start;

    theta[residual_index()] = std::max(std::sqrt(s[dim_stat() - 1] / static_cast<double>(data_.n_obs())),
                                       domain_floor);

    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> B(
        s.data(), N, kPkDims);
    const Matrix XtB = design_.transpose() * B;
    const Index s2 = N * kPkDims;
    const bool penalized = penalty.kind != PenaltyKind::none && penalty.lambda > 0.0;
    const double l1 = penalized ? penalty.lambda * penalty.alpha : 0.0;
    const double l2 = penalized ? penalty.lambda * (1.0 - penalty.alpha) : 0.0;
    CoordinateDescentOptions inner = options;
    inner.tolerance = 0.01 * options.tolerance;
    for (Index r = 0; r < kPkDims; ++r) {
        // Block ascent in (β, Σ_rr) with μ̃_(r) = Σ_rr β: the least-squares part no
        // longer couples the two, only the penalty does.
        const double c = s[s2 + r * kPkDims + r];
        const double bb = B.col(r).squaredNorm();
        const Index off = r * p;
        double sr = theta[sigma_offset() + r];
        Vector beta = theta.segment(off, p) / sr;
        bool converged = false;
        double sigma_slack = 0.0;
        for (long cycle = 0; cycle < options.max_cycles; ++cycle) {
            PenaltySpec scaled = penalty;
            if (penalized) {
                scaled.lambda = l1 / sr + l2;
                scaled.alpha = (l1 / sr) / scaled.lambda;
            }
            const Vector beta_before = beta;
            const double sr_before = sr;
            beta = maximize_penalized_quadratic(gram_, XtB.col(r), scaled, off, beta, fixed, inner).x;
            if (!pinned(r)) {
                // N/Σ - a Σ - l1 ‖β‖₁ = 0 with a = Σ_k (b_k - x̄_k'β)² + (c - Σ b_k²) + l2 ‖β‖².
                double norm1 = 0.0;
                double norm2 = 0.0;
                for (Index i = 0; i < p; ++i) {
                    if (!penalty.mask[static_cast<std::size_t>(off + i)]) continue;
                    norm1 += std::abs(beta[i]);
                    norm2 += beta[i] * beta[i];
                }
                const double rss = (B.col(r) - design_ * beta).squaredNorm();
                const double a = std::max(rss + (c - bb), 0.0) + l2 * norm2;
                // c - Σ b_k² cancels when the within-subject scatter is tiny; Σ cannot
                // be resolved more finely than that rounding allows.
                sigma_slack = a > 0.0 ? 64.0 * std::numeric_limits<double>::epsilon() * (c + rss) / a : 0.0;
                const double lin = l1 * norm1;
                double next = sigma_cap();
                if (a > 0.0 || lin > 0.0) next = 2.0 * Nd / (lin + std::sqrt(lin * lin + 4.0 * a * Nd));
                // The profile in Σ is concave, so clamping its maximizer solves the bounded step.
                sr = std::clamp(next, domain_floor, sigma_cap());
                theta[sigma_offset() + r] = sr;
            }
            theta.segment(off, p) = sr * beta;
            // Judged in (β, Σ) so that a large Σ_rr does not amplify the inner solver's slack.
            const double beta_change = (beta - beta_before).cwiseAbs().maxCoeff() /
                                       std::max(1.0, beta.cwiseAbs().maxCoeff());
            const double sigma_change = std::abs(sr - sr_before) / sr;
            if (beta_change < options.tolerance && sigma_change < std::max(options.tolerance, sigma_slack)) {
                converged = true;
                break;
            }
        }
        if (!converged) throw NumericError("PK M-step did not converge for latent coordinate " + std::to_string(r));
    }
    return theta;
}

std::vector<bool> PkModel::default_penalty_mask() const
{
    std::vector<bool> mask(static_cast<std::size_t>(dim_theta()), false);
    const Index p = block_size();
    for (Index r = 0; r < kPkDims; ++r) {
        if (!spec_.covariate_coords[r]) continue;
        for (Index i = 1; i < p; ++i) mask[static_cast<std::size_t>(r * p + i)] = true;
    }
    return mask;
}

std::vector<bool> PkModel::fixed_mask() const
{
    std::vector<bool> mask(static_cast<std::size_t>(dim_theta()), false);
    const Index p = block_size();
    for (Index r = 0; r < kPkDims; ++r) {
        if (!spec_.covariate_coords[r]) {
            for (Index i = 1; i < p; ++i) mask[static_cast<std::size_t>(r * p + i)] = true;
        }
        if (pinned(r)) mask[static_cast<std::size_t>(sigma_offset() + r)] = true;
    }
    return mask;
}

bool PkModel::project(Vector& theta) const
{
    bool moved = false;
    for (Index i = sigma_offset(); i < dim_theta(); ++i) {
        if (!(theta[i] >= domain_floor)) {
            theta[i] = domain_floor;
            moved = true;
        }
    }
    for (Index r = 0; r < kPkDims; ++r) {
        double& s = theta[sigma_offset() + r];
        if (!pinned(r) && s > sigma_cap()) {
            s = sigma_cap();
            moved = true;
        }
        if (!pinned(r)) continue;
        const double v = 1.0 / std::sqrt(spec_.pinned_omega[r]);
        if (theta[sigma_offset() + r] != v) {
            theta[sigma_offset() + r] = v;
            moved = true;
        }
    }
    return moved;
}

Vector PkModel::default_initial_theta() const
{
    const Index p = block_size();
    Vector mu = Vector::Zero(kPkDims * p);
    Vector omega(kPkDims);
    for (Index r = 0; r < kPkDims; ++r) {
        mu[r * p] = spec_.initial_intercepts[r];
        omega[r] = pinned(r) ? spec_.pinned_omega[r] : spec_.initial_omega[r];
    }
    double sigma = spec_.initial_sigma;
    if (!(sigma > 0.0)) {
        sigma = 0.5 * std::sqrt(data_.y.squaredNorm() / static_cast<double>(data_.n_obs()));
    }
    return to_tilde(mu, omega, std::max(sigma, domain_floor));
}

} // namespace stochprox
