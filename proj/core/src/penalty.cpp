#include <stochprox/penalty.hpp>

#include <algorithm>
#include <cmath>

namespace stochprox {

std::string to_string(PenaltyKind kind)
{
    switch (kind) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::lasso: return "lasso";
        case PenaltyKind::elastic_net: return "elastic-net";
        case PenaltyKind::box: return "box-projection";
    }
    return "none";
}

PenaltyKind penalty_kind_from_string(const std::string& name)
{
    if (name == "none") return PenaltyKind::none;
    if (name == "lasso") return PenaltyKind::lasso;
    if (name == "elastic-net" || name == "elastic_net") return PenaltyKind::elastic_net;
    if (name == "box-projection" || name == "box") return PenaltyKind::box;
    throw ArgumentError("unknown penalty kind '" + name + "'");
}

void PenaltySpec::validate(Index dim) const
{
    if (!(lambda >= 0.0) || std::isnan(lambda)) {
        throw ArgumentError("penalty lambda must be >= 0");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ArgumentError("elastic-net alpha must lie in (0, 1]");
    }
    if (static_cast<Index>(mask.size()) != dim) {
        throw ArgumentError("penalty mask length " + std::to_string(mask.size()) +
                            " does not match parameter dimension " + std::to_string(dim));
    }
    if (kind == PenaltyKind::box) {
        if (static_cast<Index>(lo.size()) != dim || static_cast<Index>(hi.size()) != dim) {
            throw ArgumentError("box bounds must have one entry per coordinate");
        }
        for (Index i = 0; i < dim; ++i) {
            if (!(lo[i] <= hi[i])) throw ArgumentError("box bound lo > hi");
        }
    }
}

Index PenaltySpec::penalized_count() const
{
    return static_cast<Index>(std::count(mask.begin(), mask.end(), true));
}

namespace {

void check_inputs(const PenaltySpec& spec, const Vector& theta)
{
    spec.validate(theta.size());
    if (!theta.allFinite()) throw NumericError("prox input is not finite");
}

double soft_threshold(double x, double t)
{
    // Closed dead zone: |x| <= t maps to 0.
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

} // namespace

double prox_coordinate(const PenaltySpec& spec, Index i, double gamma, double value)
{
    if (!spec.mask[i]) return value;
    switch (spec.kind) {
        case PenaltyKind::none:
            return value;
        case PenaltyKind::lasso:
            return soft_threshold(value, gamma * spec.lambda);
        case PenaltyKind::elastic_net:
            return soft_threshold(value, gamma * spec.lambda * spec.alpha) /
                   (1.0 + gamma * spec.lambda * (1.0 - spec.alpha));
        case PenaltyKind::box:
            return std::clamp(value, spec.lo[i], spec.hi[i]);
    }
    return value;
}

Vector prox(const PenaltySpec& spec, double gamma, const Vector& theta)
{
    if (!(gamma > 0.0)) throw ArgumentError("prox step size must be positive");
    check_inputs(spec, theta);
    Vector out(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        out[i] = prox_coordinate(spec, i, gamma, theta[i]);
    }
    return out;
}

Vector prox(const PenaltySpec& spec, const Vector& gammas, const Vector& theta)
{
    if (gammas.size() != theta.size()) throw ArgumentError("step vector length mismatch");
    if (!((gammas.array() > 0.0).all())) throw ArgumentError("prox step sizes must be positive");
    check_inputs(spec, theta);
    Vector out(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        out[i] = prox_coordinate(spec, i, gammas[i], theta[i]);
    }
    return out;
}

PenaltyValue penalty_value(const PenaltySpec& spec, const Vector& theta)
{
    check_inputs(spec, theta);
    PenaltyValue result;
    for (Index i = 0; i < theta.size(); ++i) {
        if (!spec.mask[i]) continue;
        const double t = theta[i];
        switch (spec.kind) {
            case PenaltyKind::none:
                break;
            case PenaltyKind::lasso:
                result.value += spec.lambda * std::abs(t);
                break;
            case PenaltyKind::elastic_net:
                result.value += spec.lambda *
                    (0.5 * (1.0 - spec.alpha) * t * t + spec.alpha * std::abs(t));
                break;
            case PenaltyKind::box:
                if (t < spec.lo[i] || t > spec.hi[i]) result.infinite = true;
                break;
        }
    }
    return result;
}

double lambda_max(const PenaltySpec& spec, const Vector& gradient_at_zero)
{
    if (static_cast<Index>(spec.mask.size()) != gradient_at_zero.size()) {
        throw ArgumentError("gradient length does not match the penalty mask");
    }
    if (spec.penalized_count() == 0) throw ArgumentError("lambda_max needs a non-empty mask");
    if (!gradient_at_zero.allFinite()) throw NumericError("gradient is not finite");
    double best = 0.0;
    for (Index i = 0; i < gradient_at_zero.size(); ++i) {
        if (spec.mask[i]) best = std::max(best, std::abs(gradient_at_zero[i]));
    }
    // The elastic-net threshold only involves the l1 part.
    if (spec.kind == PenaltyKind::elastic_net) best /= spec.alpha;
    return best;
}

std::vector<bool> mask_all_except(Index dim, const std::vector<Index>& free_coords)
{
    std::vector<bool> mask(static_cast<std::size_t>(dim), true);
    for (Index i : free_coords) {
        if (i < 0 || i >= dim) throw ArgumentError("free coordinate out of range");
        mask[static_cast<std::size_t>(i)] = false;
    }
    return mask;
}

} // namespace stochprox
