#pragma once
#include <stochprox/rng.hpp>
#include <stochprox/types.hpp>

#include <optional>
#include <string>
#include <vector>

namespace stochprox {

struct PenaltySpec;

/// One named block of the sufficient statistic S (or of θ).
struct Block
{
    std::string name;
    Index offset = 0;
    Index size = 0;
    Index subject = -1; // >= 0 for per-subject blocks
};

struct Layout
{
    std::vector<Block> blocks;
    Index size = 0;

    void add(std::string name, Index size, Index subject = -1);
    const Block& find(const std::string& name) const;
};

/// Gaussian prior of one subject's latent vector, z ~ N(mean, diag(sd²)).
struct SubjectPrior
{
    Vector mean;
    Vector sd;
};

struct CoordinateDescentOptions
{
    double tolerance = 1e-8;
    long max_cycles = 10000;
};

/**
 * Latent-variable model with complete log-likelihood
 *   log p(y, z; θ) = φ(θ) + <S(z), ψ(θ)>
 * and gradient ∇ℓ(θ) = ∇φ(θ) + Ψ(θ) S̄(θ), S̄(θ) = E_{π_θ}[S(Z)].
 *
 * The latent vector is one column per subject; S is additive over
 * subjects and linear in a compact per-subject summary (subject_stat), so
 * batch means of S are assembled from batch means of the summaries.
 *
 * Implementations are immutable after construction; every method may be
 * called concurrently.
 */
class LatentModel
{
public:
    virtual ~LatentModel() = default;

    virtual std::string name() const = 0;
    virtual Index dim_theta() const = 0;
    virtual Index dim_stat() const = 0;
    virtual Index n_subjects() const = 0;
    virtual Index latent_dim() const = 0;
    virtual const Layout& theta_layout() const = 0;
    virtual const Layout& stat_layout() const = 0;

    virtual double phi(const Vector& theta) const = 0;
    virtual Vector grad_phi(const Vector& theta) const = 0;
    virtual Vector psi(const Vector& theta) const = 0;
    /// Ψ(θ): the d × q transposed Jacobian of ψ.
    virtual Matrix psi_jacobian(const Vector& theta) const = 0;
    /// Ψ(θ) s; override when Ψ is structured.
    virtual Vector apply_psi(const Vector& theta, const Vector& s) const;
    /// Diagonal of the expected complete-data information at θ, given the
    /// statistic s where it enters (must be positive).
    virtual Vector complete_information_diag(const Vector& theta, const Vector& s) const = 0;
    /// Σ_j |I_ij| of the same information matrix: a diagonal majorant of it.
    virtual Vector complete_information_rowsum(const Vector& theta, const Vector& s) const = 0;

    // Sufficient statistic.
    virtual Index subject_stat_dim() const = 0;
    virtual void subject_stat(Index k, const Eigen::Ref<const Vector>& zk,
                              Eigen::Ref<Vector> out) const = 0;
    /// Linear map from per-subject summaries (subject_stat_dim × N) to S.
    virtual Vector assemble_stat(const Matrix& summaries) const = 0;
    /// S(z) for latent matrix z (latent_dim × N).
    Vector stat(const Matrix& z) const;

    // Per-subject posterior pieces used by the samplers.
    virtual SubjectPrior subject_prior(const Vector& theta, Index k) const = 0;
    /// log p(y_k | z_k; θ), normalizing constants included.
    virtual double subject_loglik(const Vector& theta, Index k,
                                  const Eigen::Ref<const Vector>& zk) const = 0;
    virtual Matrix initial_latent(const Vector& theta) const;

    // Optional capabilities.
    virtual bool has_exact_sampler() const { return false; }
    virtual void sample_exact(const Vector& theta, Index k, CounterRng& rng,
                              Eigen::Ref<Vector> out) const;
    // Sum of subject_stat over m exact draws, sampled in distribution without
    // drawing each z. Returns false when the model has no such shortcut.
    virtual bool sample_exact_stat_sum(const Vector&, Index, long, CounterRng&, Eigen::Ref<Vector>) const
    {
        return false;
    }
    virtual std::optional<Vector> exact_mean_stat(const Vector&) const { return std::nullopt; }
    virtual std::optional<double> exact_loglik(const Vector&) const { return std::nullopt; }
    virtual std::optional<double> lipschitz() const { return std::nullopt; }

    /// argmax_θ φ(θ) + <s, ψ(θ)> - g(θ), warm-started at `start`.
    virtual Vector maximize_surrogate(const Vector& s, const PenaltySpec& penalty,
                                      const Vector& start,
                                      const CoordinateDescentOptions& options) const = 0;

    /// Default penalty mask (true = penalized).
    virtual std::vector<bool> default_penalty_mask() const = 0;
    /// Coordinates held at their initial value by every algorithm.
    virtual std::vector<bool> fixed_mask() const;
    /// Maps θ back into the admissible set; returns true if anything moved.
    virtual bool project(Vector&) const { return false; }
    virtual void validate_theta(const Vector& theta) const;
    virtual Vector default_initial_theta() const = 0;
};

/// ∇φ(θ) + Ψ(θ) s.
Vector gradient_surrogate(const LatentModel& model, const Vector& theta, const Vector& stat_estimate);

/// φ(θ) + <s, ψ(θ)>, the EM surrogate Q(θ | ·) at statistic s.
double surrogate_value(const LatentModel& model, const Vector& theta, const Vector& s);

/**
 * Louis-type curvature estimate for the adaptive step sizes:
 *   I_c(θ; mean_j S_j) - var_j[∂_θ log p(y, z_j; θ)]
 * with I_c the complete-data information diagonal and the variance taken
 * over the batch (m-1 divisor; zero for a single draw).
 */
Vector hessian_diag_contribution(const LatentModel& model, const Vector& theta,
                                 const std::vector<Vector>& draw_stats);

/// Row-sum majorant of the complete-data information at the batch mean statistic.
Vector majorant_contribution(const LatentModel& model, const Vector& theta,
                             const std::vector<Vector>& draw_stats);

} // namespace stochprox
