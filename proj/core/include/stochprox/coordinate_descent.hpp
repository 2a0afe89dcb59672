#pragma once
#include <stochprox/model.hpp>
#include <stochprox/penalty.hpp>

#include <vector>

namespace stochprox {

struct QuadraticCdResult
{
    Vector x;
    long cycles = 0;
    double max_change = 0.0;
};

/**
 * Cyclical coordinate descent for
 *   max_x  -½ x'Ax + b'x - Σ_i g_{offset+i}(x_i)
 * where g is the separable penalty `penalty` read at coordinates
 * offset, ..., offset + dim - 1. Coordinates with `fixed[offset+i]` keep
 * their starting value; an empty `fixed` means none are fixed.
 * Throws NumericError if the largest coordinate move is still above the
 * tolerance after `options.max_cycles` sweeps.
 */
QuadraticCdResult maximize_penalized_quadratic(const Matrix& A, const Vector& b,
                                               const PenaltySpec& penalty, Index offset,
                                               const Vector& start,
                                               const std::vector<bool>& fixed,
                                               const CoordinateDescentOptions& options);

} // namespace stochprox
