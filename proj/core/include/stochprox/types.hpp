#pragma once
#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stochprox {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Bad inputs: dimensions, ranges, missing capabilities.
class ArgumentError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, singular systems, solver non-convergence.
class NumericError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace stochprox
