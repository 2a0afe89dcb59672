#pragma once
#include <stochprox/types.hpp>

#include <string>
#include <vector>

namespace stochprox {

/**
 * Step-size, averaging-weight and batch-size sequences.
 *
 *   γ_{n+1} = γ⋆              n <= n_α,   γ⋆ (n - n_α)^{-α}  otherwise
 *   δ_{n+1} = δ⋆              n <= n_β,   δ⋆ (n - n_β)^{-β}  otherwise
 *   m_n     = ceil(m⋆ n^c)
 *
 * With `adaptive`, the scalar γ is replaced by a diagonal Γ built from a
 * running curvature estimate (see adaptive_gamma_update); n0 is the
 * switch-over iteration after which Γ decays like n^{-α}.
 */
struct ScheduleSpec
{
    double gamma_star = 1.0;
    double alpha = 0.0;
    long n_alpha = 0;
    double delta_star = 1.0;
    double beta = 0.0;
    long n_beta = 0;
    long m_star = 1;
    double c = 0.0;
    bool adaptive = false;
    long n0 = 0;

    void validate() const;
};

// γ_{n+1}: the step used by the iteration that maps θ_n to θ_{n+1}.
double gamma_at(const ScheduleSpec& spec, long n);

// δ_{n+1}, same convention as gamma_at.
double delta_at(const ScheduleSpec& spec, long n);

// m_n = ceil(m⋆ n^c) for n >= 1; the iteration from θ_n draws m_{n+1} points.
long batch_at(const ScheduleSpec& spec, long n);

/**
 * D_n = Σ_{k>=n} Π_{j=n+1}^{k} (1 - δ_j), with δ_j = delta_at(spec, j) and
 * the empty product equal to 1, so that constant δ⋆ gives D_n = 1/δ⋆.
 *
 * The sum is truncated at `horizon` and the remainder is bounded by an
 * integral comparison valid for the polynomial regime. If the bound
 * exceeds `tolerance`, ArgumentError is thrown with an estimate of the
 * horizon needed.
 */
struct DResult
{
    double value = 0.0;
    double tail_bound = 0.0;
    long horizon = 0;
};

DResult compute_D(const ScheduleSpec& spec, long n, long horizon, double tolerance = 1e-10);

// Smallest horizon (by doubling from n) for which compute_D certifies `tolerance`.
long required_D_horizon(const ScheduleSpec& spec, long n, double tolerance = 1e-10);

struct H5Condition
{
    std::string name;
    bool passed = false;
    std::string detail;
};

struct H5Report
{
    std::vector<H5Condition> conditions;
    // Partial sums of Σ (γ_{n-1}γ_n + γ_{n-1}² + |γ_n - γ_{n-1}|) D_n over the
    // last two dyadic blocks; informational, not part of `passed`.
    double block_sum_early = 0.0;
    double block_sum_late = 0.0;
    bool numerically_flattening = false;
    bool passed = false;

    const H5Condition* find(const std::string& name) const;
};

// Analytic step-size conditions for polynomial schedules plus a numeric look
// at the leading series over `n_terms` terms.
H5Report validate_H5(const ScheduleSpec& spec, long n_terms);

// Δ_{k:n} = Π_{j=k}^{n}(1-δ_j) telescoping identity:
//   Σ_{j=2}^{n} Δ_{j+1:n} δ_j = 1 - Δ_{2:n}.
struct DeltaIdentity
{
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
};

DeltaIdentity delta_identity_check(const ScheduleSpec& spec, long n);

/// Running diagonal curvature estimate behind the adaptive step matrix Γ.
struct AdaptiveGammaState
{
    Vector hessian_diag;
    long iteration = 0;
    bool initialized = false;
};

struct AdaptiveGammaLimits
{
    double h_min = 1e-6;
    double h_max = 1e6;
};

struct AdaptiveGammaUpdate
{
    AdaptiveGammaState state;
    Vector steps;              // diagonal of Γ^{n+1}
    bool zero_diagonal = false; // some entry was <= 0 before clamping
};

/**
 * H^n = (1-δ) H^{n-1} + δ h (the first call takes H = h), clamped to
 * [h_min, h_max], then
 *   Γ^{n+1}_ii = 1 / H^n_ii                 n <= n0
 *   Γ^{n+1}_ii = 1 / ((n - n0)^α H^n_ii)     n >  n0
 * where n = state.iteration.
 */
AdaptiveGammaUpdate adaptive_gamma_update(const AdaptiveGammaState& state,
                                          const Vector& hessian_contribution,
                                          double delta,
                                          const ScheduleSpec& spec,
                                          const AdaptiveGammaLimits& limits = {});

} // namespace stochprox
