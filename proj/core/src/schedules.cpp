#include <stochprox/schedules.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stochprox {

void ScheduleSpec::validate() const
{
    if (!(gamma_star > 0.0)) throw ArgumentError("gamma_star must be positive");
    if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
    if (n_alpha < 0 || n_beta < 0 || n0 < 0) throw ArgumentError("warm-up lengths must be >= 0");
    if (!(delta_star > 0.0 && delta_star <= 1.0)) throw ArgumentError("delta_star must lie in (0, 1]");
    if (!(beta >= 0.0)) throw ArgumentError("beta must be >= 0");
    if (m_star < 1) throw ArgumentError("m_star must be >= 1");
    if (!(c >= 0.0)) throw ArgumentError("batch growth exponent c must be >= 0");
}

double gamma_at(const ScheduleSpec& spec, long n)
{
    if (n <= spec.n_alpha) return spec.gamma_star;
    return spec.gamma_star * std::pow(static_cast<double>(n - spec.n_alpha), -spec.alpha);
}

double delta_at(const ScheduleSpec& spec, long n)
{
    if (n <= spec.n_beta) return spec.delta_star;
    return spec.delta_star * std::pow(static_cast<double>(n - spec.n_beta), -spec.beta);
}

long batch_at(const ScheduleSpec& spec, long n)
{
    const double raw = static_cast<double>(spec.m_star) *
                       std::pow(static_cast<double>(std::max(n, 1L)), spec.c);
    // Shave float noise so that integral values do not round up.
    const long m = static_cast<long>(std::ceil(raw * (1.0 - 1e-12)));
    return std::max(m, 1L);
}

namespace {

// Upper bound on Σ_{k>H} Π_{j=H+1}^{k}(1-δ_j) for the polynomial regime
// j > n_β + 1. Uses 1 - x <= e^{-x}, an integral lower bound on Σ δ_j and
// Γ(s, x) <= x^{s-1} e^{-x} / (1 - (s-1)/x) for s >= 1, x > s - 1.
// Returns a negative value when the bound does not apply.
double scaled_tail_bound(const ScheduleSpec& spec, long horizon)
{
    if (horizon < spec.n_beta + 2) return -1.0;
    if (spec.beta >= 1.0) return -1.0;
    const double beta = spec.beta;
    const double s = 1.0 / (1.0 - beta);
    const double c = spec.delta_star / (1.0 - beta);
    // δ_j = δ⋆ (j - n_β)^{-β}; δ_j >= ∫_{j}^{j+1} δ⋆ (u - n_β)^{-β} du.
    const double a = static_cast<double>(horizon + 1 - spec.n_beta);
    const double x = c * std::pow(a, 1.0 - beta);
    if (!(x > s - 1.0)) return -1.0;
    const double log_bound = -s * std::log(c) + (s - 1.0) * std::log(x) -
                             std::log(1.0 - (s - 1.0) / x) - std::log(1.0 - beta);
    return std::exp(log_bound);
}

} // namespace

DResult compute_D(const ScheduleSpec& spec, long n, long horizon, double tolerance)
{
    if (n < 0) throw ArgumentError("compute_D needs n >= 0");
    if (spec.beta >= 1.0) {
        throw ArgumentError("D_n is infinite for beta >= 1");
    }
    if (horizon < n) throw ArgumentError("horizon must be >= n");
    double sum = 0.0;
    double product = 1.0;
    // Kahan summation keeps the constant-δ case exact to rounding.
    double comp = 0.0;
    for (long k = n; k <= horizon; ++k) {
        if (k > n) product *= (1.0 - delta_at(spec, k));
        const double y = product - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if (product == 0.0) break;
    }
    DResult result;
    result.value = sum;
    result.horizon = horizon;
    if (product == 0.0) {
        result.tail_bound = 0.0;
        return result;
    }
    const double scaled = scaled_tail_bound(spec, horizon);
    if (scaled < 0.0) {
        std::ostringstream msg;
        msg << "horizon " << horizon << " too small to certify the D_n tail; need about "
            << required_D_horizon(spec, n, tolerance);
        throw ArgumentError(msg.str());
    }
    result.tail_bound = product * scaled;
    if (result.tail_bound > tolerance) {
        std::ostringstream msg;
        msg << "D_n tail bound " << result.tail_bound << " exceeds " << tolerance
            << " at horizon " << horizon << "; need about " << required_D_horizon(spec, n, tolerance);
        throw ArgumentError(msg.str());
    }
    return result;
}

long required_D_horizon(const ScheduleSpec& spec, long n, double tolerance)
{
    if (spec.beta >= 1.0) throw ArgumentError("D_n is infinite for beta >= 1");
    long horizon = std::max(n + 1, spec.n_beta + 2);
    constexpr long kCap = 1L << 40;
    while (horizon < kCap) {
        // log Π_{j=n+1}^{H} (1-δ_j) <= -Σ δ_j; estimate the sum by an integral.
        double log_product = 0.0;
        const double beta = spec.beta;
        const double lo = static_cast<double>(std::max(n, spec.n_beta) + 1 - spec.n_beta);
        const double hi = static_cast<double>(horizon + 1 - spec.n_beta);
        const long flat = std::max(0L, std::min(horizon, spec.n_beta + 1) - n);
        log_product -= spec.delta_star * static_cast<double>(flat);
        if (hi > lo) {
            if (beta == 0.0) {
                log_product -= spec.delta_star * (hi - lo);
            } else {
                log_product -= spec.delta_star *
                               (std::pow(hi, 1.0 - beta) - std::pow(lo, 1.0 - beta)) / (1.0 - beta);
            }
        }
        const double scaled = scaled_tail_bound(spec, horizon);
        if (scaled >= 0.0 && log_product + std::log(scaled) < std::log(tolerance)) return horizon;
        horizon *= 2;
    }
    return kCap;
}

const H5Condition* H5Report::find(const std::string& name) const
{
    for (const auto& c : conditions) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

H5Report validate_H5(const ScheduleSpec& spec, long n_terms)
{
    H5Report report;
    const double a = spec.alpha;
    const double b = spec.beta;
    const double c = spec.c;
    auto add = [&](std::string name, bool ok, std::string detail) {
        report.conditions.push_back({std::move(name), ok, std::move(detail)});
    };

    add("delta_in_open_unit_interval", spec.delta_star > 0.0 && spec.delta_star < 1.0,
        "averaging weights must lie in (0,1)");
    add("beta_below_one", b < 1.0, "beta >= 1 makes D_n = +inf");
    add("sum_gamma_diverges", a <= 1.0, "sum of gamma_n diverges iff alpha <= 1");
    add("sum_gamma_squared_converges", a > 0.5, "sum of gamma_n^2 converges iff alpha > 1/2");
    add("gamma_squared_times_D_summable", 2.0 * a - b > 1.0,
        "gamma_n^2 D_n ~ n^{beta-2 alpha} summable iff (1+beta)/2 < alpha");
    add("gamma_increment_times_D_summable", a > b,
        "|gamma_n - gamma_{n-1}| D_n ~ n^{beta-alpha-1} summable iff alpha > beta");
    add("batch_term_summable", 2.0 * a + c > 1.0,
        "gamma_n^2 delta_n^2 (1+D)^2 / m_n ~ n^{-2 alpha - c} summable iff 2 alpha + c > 1");

    report.passed = true;
    for (const auto& cond : report.conditions) report.passed = report.passed && cond.passed;

    // Numeric look at the leading series with D_n from the backward recursion
    // D_n = 1 + (1 - δ_{n+1}) D_{n+1}.
    if (b < 1.0 && n_terms >= 8) {
        const long top = n_terms + 1;
        double d_next = 1.0 / spec.delta_star;
        try {
            const long horizon = required_D_horizon(spec, top, 1e-8);
            d_next = compute_D(spec, top, std::max(horizon, top), 1e-8).value;
        } catch (const ArgumentError&) {
            // Falls back to the constant-δ value; only used for the heuristic.
        }
        std::vector<double> D(static_cast<std::size_t>(top + 1), 0.0);
        D[static_cast<std::size_t>(top)] = d_next;
        for (long k = top - 1; k >= 1; --k) {
            D[static_cast<std::size_t>(k)] =
                1.0 + (1.0 - delta_at(spec, k + 1)) * D[static_cast<std::size_t>(k + 1)];
        }
        const long quarter = n_terms / 4;
        const long half = n_terms / 2;
        for (long k = 2; k <= n_terms; ++k) {
            const double g0 = gamma_at(spec, k - 1);
            const double g1 = gamma_at(spec, k);
            const double term = (g0 * g1 + g0 * g0 + std::abs(g1 - g0)) * D[static_cast<std::size_t>(k)];
            if (k > quarter && k <= half) report.block_sum_early += term;
            if (k > half) report.block_sum_late += term;
        }
        report.numerically_flattening = report.block_sum_late < 0.98 * report.block_sum_early;
    }
    return report;
}

DeltaIdentity delta_identity_check(const ScheduleSpec& spec, long n)
{
    if (n < 2) throw ArgumentError("delta identity needs n >= 2");
    DeltaIdentity out;
    double tail = 1.0; // Δ_{j+1:n}
    for (long j = n; j >= 2; --j) {
        const double d = delta_at(spec, j);
        out.lhs += tail * d;
        tail *= (1.0 - d);
    }
    out.rhs = 1.0 - tail;
    out.residual = std::abs(out.lhs - out.rhs);
    return out;
}

AdaptiveGammaUpdate adaptive_gamma_update(const AdaptiveGammaState& state,
                                          const Vector& hessian_contribution,
                                          double delta,
                                          const ScheduleSpec& spec,
                                          const AdaptiveGammaLimits& limits)
{
    if (!(delta >= 0.0 && delta <= 1.0)) throw ArgumentError("delta must lie in [0,1]");
    if (!hessian_contribution.allFinite()) throw NumericError("curvature contribution is not finite");
    if (state.initialized && state.hessian_diag.size() != hessian_contribution.size()) {
        throw ArgumentError("curvature contribution has the wrong length");
    }
    AdaptiveGammaUpdate out;
    out.state = state;
    Vector& H = out.state.hessian_diag;
    if (!state.initialized) {
        H = hessian_contribution;
        out.state.initialized = true;
    } else {
        H = (1.0 - delta) * H + delta * hessian_contribution;
    }
    out.zero_diagonal = (H.array() <= 0.0).any();
    H = H.cwiseMax(limits.h_min).cwiseMin(limits.h_max);

    const long n = state.iteration;
    double scale = 1.0;
    if (n > spec.n0) scale = std::pow(static_cast<double>(n - spec.n0), spec.alpha);
    out.steps = (scale * H.array()).inverse().matrix();
    out.state.iteration = n + 1;
    return out;
}

} // namespace stochprox
