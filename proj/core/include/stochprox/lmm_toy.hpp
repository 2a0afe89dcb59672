#pragma once
#include <stochprox/model.hpp>

#include <cstdint>
#include <vector>

namespace stochprox {

/**
 * Random intercept and slope model
 *   Y_kj | Z_k ~ N(<Z_k, (1, t_kj)>, 1),   Z_k ~ N_2(X_k θ, I_2),
 * with X_k = [x̄_k' 0; 0 x̄_k'] and x̄_k = (1, X_k1, ..., X_kD).
 * θ has length 2(D+1): block 1 drives the intercept, block 2 the slope.
 */
struct LmmDataset
{
    Index n_subjects = 0;
    Index n_times = 0;
    Index n_covariates = 0;
    Matrix times;      // N × J
    Matrix covariates; // N × D
    Matrix y;          // N × J

    void validate() const;
};

struct LmmSimulation
{
    LmmDataset data;
    Vector theta_star;
};

/// Observation times for J measurements: {0.25, 4, 6, ..., 16}, then +2 beyond.
std::vector<double> lmm_default_times(Index J);

/// Rows of N(0, Γ) with Γ_rr' = ρ^{|r-r'|}, drawn through the Cholesky factor.
Matrix ar1_covariates(Index N, Index D, double rho, std::uint64_t seed, std::uint64_t stream);

/**
 * θ*: both intercepts 1, min(6, D) covariate effects per block chosen
 * uniformly at random and valued in U[0.5, 1.5], everything else 0.
 */
Vector lmm_theta_star(Index D, std::uint64_t seed);

LmmSimulation simulate_lmm(Index N, Index J, Index D, std::uint64_t seed);

/// Per-subject posterior N(mean_k, cov_k).
struct LmmPosterior
{
    std::vector<Eigen::Vector2d> mean;
    std::vector<Eigen::Matrix2d> cov;
};

class LmmToyModel final : public LatentModel
{
public:
    explicit LmmToyModel(LmmDataset data);

    const LmmDataset& data() const { return data_; }
    Index n_covariates() const { return data_.n_covariates; }

    std::string name() const override { return "toy"; }
    Index dim_theta() const override { return dim_; }
    Index dim_stat() const override { return dim_ + 1; }
    Index n_subjects() const override { return data_.n_subjects; }
    Index latent_dim() const override { return 2; }
    const Layout& theta_layout() const override { return theta_layout_; }
    const Layout& stat_layout() const override { return stat_layout_; }

    double phi(const Vector& theta) const override;
    Vector grad_phi(const Vector& theta) const override;
    Vector psi(const Vector& theta) const override;
    Matrix psi_jacobian(const Vector& theta) const override;
    Vector apply_psi(const Vector& theta, const Vector& s) const override;
    Vector complete_information_diag(const Vector& theta, const Vector& s) const override;
    Vector complete_information_rowsum(const Vector& theta, const Vector& s) const override;

    Index subject_stat_dim() const override { return 3; }
    void subject_stat(Index k, const Eigen::Ref<const Vector>& zk, Eigen::Ref<Vector> out) const override;
    Vector assemble_stat(const Matrix& summaries) const override;

    SubjectPrior subject_prior(const Vector& theta, Index k) const override;
    double subject_loglik(const Vector& theta, Index k, const Eigen::Ref<const Vector>& zk) const override;

    bool has_exact_sampler() const override { return true; }
    void sample_exact(const Vector& theta, Index k, CounterRng& rng, Eigen::Ref<Vector> out) const override;
    /// Batch mean ~ N(μ, C/m) and scatter ~ Wishart(m-1) (Bartlett), independent.
    bool sample_exact_stat_sum(const Vector& theta, Index k, long m, CounterRng& rng,
                               Eigen::Ref<Vector> out) const override;
    std::optional<Vector> exact_mean_stat(const Vector& theta) const override;
    std::optional<double> exact_loglik(const Vector& theta) const override;
    std::optional<double> lipschitz() const override { return lipschitz_; }

    Vector maximize_surrogate(const Vector& s, const PenaltySpec& penalty, const Vector& start,
                              const CoordinateDescentOptions& options) const override;

    std::vector<bool> default_penalty_mask() const override;
    bool project(Vector& theta) const override;
    Vector default_initial_theta() const override { return Vector::Zero(dim_); }

    LmmPosterior exact_posterior(const Vector& theta) const;

    /// X_k θ.
    Eigen::Vector2d design_apply(Index k, const Vector& theta) const;
    /// out += X_k' v.
    void design_transpose_add(Index k, const Eigen::Vector2d& v, Vector& out) const;

    /// Σ_k X_k' X_k and the Hessian of ℓ, -Σ X_k'X_k + Σ X_k'(I+T_k)^{-1}X_k.
    const Matrix& gram() const { return gram_; }
    const Matrix& loglik_hessian() const { return hessian_; }

    /// Radius of Θ = {‖θ‖ < radius}.
    static constexpr double theta_radius = 1e4;

private:
    LmmDataset data_;
    Index dim_ = 0;
    Layout theta_layout_;
    Layout stat_layout_;
    std::vector<Eigen::Matrix2d> precision_; // I + T_k
    std::vector<Eigen::Matrix2d> cov_;       // (I + T_k)^{-1}
    std::vector<Eigen::Matrix2d> cov_chol_;  // lower Cholesky factor of cov_
    std::vector<Eigen::Vector2d> ybar_;
    double y_sq_sum_ = 0.0;
    Matrix gram_;
    Matrix hessian_;
    double lipschitz_ = 0.0;
};

} // namespace stochprox
