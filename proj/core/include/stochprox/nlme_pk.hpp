#pragma once
#include <stochprox/model.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace stochprox {

/// Number of PK latent coordinates: (log Vc, log Vp, log Q, log Cl, log ka).
inline constexpr Index kPkDims = 5;

struct PkAmounts
{
    double depot = 0.0;
    double central = 0.0;
    double peripheral = 0.0;
};

/**
 * Two-compartment model with first-order absorption:
 *   A_d' = -ka A_d
 *   A_c' = ka A_d + (Q/Vp) A_p - (Q/Vc) A_c - (Cl/Vc) A_c
 *   A_p' = (Q/Vc) A_c - (Q/Vp) A_p
 * from A_d(0) = dose, A_c(0) = A_p(0) = 0. Closed form through the
 * eigenvalues of the central/peripheral block; falls back to an adaptive
 * Runge-Kutta integration when those eigenvalues nearly coincide.
 */
PkAmounts pk_amounts(double dose, double vc, double vp, double q, double cl, double ka, double t);

/// Same system integrated numerically (Dormand-Prince, given tolerances).
PkAmounts pk_amounts_ode(double dose, double vc, double vp, double q, double cl, double ka, double t,
                         double abs_tol = 1e-12, double rel_tol = 1e-12);

/// f(t, z) = A_c(t) / Vc with z = (log Vc, log Vp, log Q, log Cl, log ka); clamped at 0.
double pk_concentration(double dose, const Eigen::Ref<const Vector>& z, double t);

/// Concentrations at several times for one latent vector.
void pk_concentrations(double dose, const Eigen::Ref<const Vector>& z,
                       const Eigen::Ref<const Vector>& times, Eigen::Ref<Vector> out);

struct PkDataset
{
    Index n_subjects = 0;
    Index n_times = 0;
    Index n_covariates = 0;
    double dose = 150000.0;
    Matrix times;      // N × J, strictly increasing per row
    Matrix covariates; // N × D
    Matrix y;          // N × J

    void validate() const;
    Index n_obs() const { return n_subjects * n_times; }
};

struct PkSimulationOptions
{
    double dose = 150000.0; // 150 mg in µg, so concentrations come out in µg/L
    double sigma_fraction = 0.1; // residual sd = fraction × mean concentration
    std::vector<double> times;   // empty: pk_default_times(J)
};

struct PkSimulation
{
    PkDataset data;
    Vector mu;          // R(D+1), natural scale
    Vector omega;       // R diagonal variances
    double sigma = 0.0; // residual sd
    Vector theta_tilde; // (μ̃, Σ, σ)
    std::vector<Index> true_effects; // indices into μ of the nonzero covariate effects
};

std::vector<double> pk_default_times(Index J);

/// Population intercepts of the simulation protocol.
const std::array<double, kPkDims>& pk_population_intercepts();
const std::array<double, kPkDims>& pk_population_omega();

/**
 * Covariate effects sit on Vc (third covariate) and Cl (eighth covariate),
 * so for D = 300 they are μ_4 and μ_912 in 1-based numbering.
 */
std::vector<Index> pk_true_effect_indices(Index D);

PkSimulation simulate_pk(Index N, Index J, Index D, std::uint64_t seed,
                         const PkSimulationOptions& options = {});

struct PkModelSpec
{
    // Latent coordinates that carry covariate effects; empty means all.
    std::vector<bool> covariate_coords;
    // Pinned random-effect variances Ω_rr; NaN (or empty vector) means free.
    std::vector<double> pinned_omega;
    // Starting point: natural-scale intercepts and variances.
    std::array<double, kPkDims> initial_intercepts{6.5, 7.0, 6.0, 5.5, -0.5};
    std::array<double, kPkDims> initial_omega{0.25, 0.25, 0.25, 0.25, 0.25};
    // Starting residual sd; <= 0 picks half the root-mean-square observation.
    double initial_sigma = 0.0;
    // Lower bound on free Ω_rr, i.e. Σ_rr <= omega_floor^{-1/2}. Keeps Θ bounded
    // when a weakly identified variance drifts to zero.
    double omega_floor = 1e-4;
};

/**
 * Scale-invariant parameterization θ̃ = (μ̃, Σ_11..Σ_RR, σ) with
 * μ̃_(r) = μ_(r) Ω_rr^{-1/2} and Σ_rr = Ω_rr^{-1/2}:
 *   φ(θ̃) = -JN log σ + N log|Σ| - ½ Σ_k ‖X_k μ̃‖²
 *   ψ_1k = Σ X_k μ̃,  ψ_2 = -½ Σ²,  ψ_3 = -1/(2σ²)
 * with statistics S_1k = z_k, S_2 = Σ z_k z_k', S_3 = Σ (Y_kj - f(t_kj, z_k))².
 */
class PkModel final : public LatentModel
{
public:
    static constexpr double domain_floor = 1e-8;
    double sigma_cap() const { return 1.0 / std::sqrt(spec_.omega_floor); }

    PkModel(PkDataset data, PkModelSpec spec = {});

    const PkDataset& data() const { return data_; }
    const PkModelSpec& spec() const { return spec_; }
    Index n_covariates() const { return data_.n_covariates; }
    Index block_size() const { return data_.n_covariates + 1; }
    Index sigma_offset() const { return kPkDims * block_size(); }
    Index residual_index() const { return sigma_offset() + kPkDims; }

    std::string name() const override { return "pk"; }
    Index dim_theta() const override { return residual_index() + 1; }
    Index dim_stat() const override { return data_.n_subjects * kPkDims + kPkDims * kPkDims + 1; }
    Index n_subjects() const override { return data_.n_subjects; }
    Index latent_dim() const override { return kPkDims; }
    const Layout& theta_layout() const override { return theta_layout_; }
    const Layout& stat_layout() const override { return stat_layout_; }

    double phi(const Vector& theta) const override;
    Vector grad_phi(const Vector& theta) const override;
    Vector psi(const Vector& theta) const override;
    Matrix psi_jacobian(const Vector& theta) const override;
    Vector apply_psi(const Vector& theta, const Vector& s) const override;
    Vector complete_information_diag(const Vector& theta, const Vector& s) const override;
    Vector complete_information_rowsum(const Vector& theta, const Vector& s) const override;

    Index subject_stat_dim() const override { return kPkDims + kPkDims * kPkDims + 1; }
    void subject_stat(Index k, const Eigen::Ref<const Vector>& zk, Eigen::Ref<Vector> out) const override;
    Vector assemble_stat(const Matrix& summaries) const override;

    SubjectPrior subject_prior(const Vector& theta, Index k) const override;
    double subject_loglik(const Vector& theta, Index k, const Eigen::Ref<const Vector>& zk) const override;

    Vector maximize_surrogate(const Vector& s, const PenaltySpec& penalty, const Vector& start,
                              const CoordinateDescentOptions& options) const override;

    std::vector<bool> default_penalty_mask() const override;
    std::vector<bool> fixed_mask() const override;
    bool project(Vector& theta) const override;
    void validate_theta(const Vector& theta) const override;
    Vector default_initial_theta() const override;

    /// Σ_k (Y_kj - f(t_kj, z_k))² for one subject.
    double subject_sse(Index k, const Eigen::Ref<const Vector>& zk) const;

    /// Natural-scale (μ, Ω, σ) ↔ θ̃.
    Vector to_tilde(const Vector& mu, const Vector& omega, double sigma) const;
    void from_tilde(const Vector& theta, Vector& mu, Vector& omega, double& sigma) const;

    /// x̄_k' μ̃_(r) for every r.
    Vector linear_predictor(const Vector& theta, Index k) const;

private:
    bool pinned(Index r) const;

    PkDataset data_;
    PkModelSpec spec_;
    Layout theta_layout_;
    Layout stat_layout_;
    Matrix design_; // N × (D+1), rows x̄_k = (1, X_k)
    Matrix gram_;   // Σ_k x̄_k x̄_k'
};

} // namespace stochprox
