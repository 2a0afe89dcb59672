#include <stochprox/coordinate_descent.hpp>

#include <cmath>
#include <sstream>

namespace stochprox {

QuadraticCdResult maximize_penalized_quadratic(const Matrix& A, const Vector& b,
                                               const PenaltySpec& penalty, Index offset,
                                               const Vector& start,
                                               const std::vector<bool>& fixed,
                                               const CoordinateDescentOptions& options)
{
    const Index n = b.size();
    if (A.rows() != n || A.cols() != n || start.size() != n) {
        throw ArgumentError("coordinate descent: dimension mismatch");
    }
    QuadraticCdResult result;
    result.x = start;
    Vector& x = result.x;
    // r = b - A x, maintained incrementally.
    Vector r = b - A * x;
    for (long cycle = 1; cycle <= options.max_cycles; ++cycle) {
        double max_change = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (!fixed.empty() && fixed[static_cast<std::size_t>(offset + i)]) continue;
            const double a = A(i, i);
            if (!(a > 0.0)) continue;
            const double old = x[i];
            const double target = old + r[i] / a;
            const double updated = prox_coordinate(penalty, offset + i, 1.0 / a, target);
            const double change = updated - old;
            if (change != 0.0) {
                x[i] = updated;
                r.noalias() -= change * A.col(i);
                max_change = std::max(max_change, std::abs(change));
            }
        }
        result.cycles = cycle;
        result.max_change = max_change;
        if (!std::isfinite(max_change)) throw NumericError("coordinate descent diverged");
        if (max_change < options.tolerance) return result;
    }
    std::ostringstream msg;
    msg << "coordinate descent did not converge in " << options.max_cycles
        << " cycles (last max change " << result.max_change << ")";
    throw NumericError(msg.str());
}

} // namespace stochprox
