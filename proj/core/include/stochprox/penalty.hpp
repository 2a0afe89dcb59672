#pragma once
#include <stochprox/types.hpp>

#include <optional>
#include <string>
#include <vector>

namespace stochprox {

enum class PenaltyKind { none, lasso, elastic_net, box };

std::string to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& name);

/**
 * Separable convex penalty g over the parameter vector.
 *
 * Only coordinates with mask[i] == true are penalized; the others pass
 * through every prox untouched. For the elastic net,
 *   g(θ) = λ Σ_{i masked} ( (1-α)/2 θ_i² + α |θ_i| ),
 * lasso is the α = 1 case, and box is the characteristic function of
 * [lo_i, hi_i] on the masked coordinates.
 */
struct PenaltySpec
{
    PenaltyKind kind = PenaltyKind::none;
    double lambda = 0.0;
    double alpha = 1.0;
    std::vector<bool> mask;
    std::vector<double> lo;
    std::vector<double> hi;

    // Throws ArgumentError when the invariants do not hold for `dim`.
    void validate(Index dim) const;

    Index penalized_count() const;
};

// +∞ is carried by a flag so that traces stay finite and serializable.
struct PenaltyValue
{
    double value = 0.0;
    bool infinite = false;
};

// argmin_τ { g(τ) + ‖θ - τ‖² / (2γ) }.
Vector prox(const PenaltySpec& spec, double gamma, const Vector& theta);

// Coordinatewise steps: coordinate i uses γ_i (diagonal Γ).
Vector prox(const PenaltySpec& spec, const Vector& gammas, const Vector& theta);

// Scalar prox for a single coordinate i.
double prox_coordinate(const PenaltySpec& spec, Index i, double gamma, double value);

PenaltyValue penalty_value(const PenaltySpec& spec, const Vector& theta);

// Smallest λ for which all penalized coordinates vanish at a stationary
// point: max_{i masked} |∂ℓ/∂θ_i|, evaluated with the penalized block at 0.
double lambda_max(const PenaltySpec& spec, const Vector& gradient_at_zero);

// Mask penalizing every coordinate except the listed ones.
std::vector<bool> mask_all_except(Index dim, const std::vector<Index>& free_coords);

} // namespace stochprox
