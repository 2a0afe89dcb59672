#pragma once
#include <stochprox/engine.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stochprox {

struct SlopeFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double max_residual = 0.0;
};

/// Least-squares line through (log x_i, log y_i).
SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct RateReport
{
    std::vector<long> iterations;     // n = 1..max_iter
    std::vector<double> l2_error;     // sqrt(mean_r ‖S_{n} - S̄(θ_{n-1})‖²)
    SlopeFit fit;                     // over the final half
    double predicted_slope = 0.0;
    long replicates = 0;
};

/// Theoretical L2-norm slope: SAPG -min(2(α-β), β+c)/2, MCPG -c/2.
double predicted_rate_slope(Algorithm algorithm, const ScheduleSpec& schedule);

/// Runs `replicates` seeds (config.seed + r) and fits the tail slope.
RateReport rate_experiment(const LatentModel& model, const EngineConfig& config, long replicates);

struct AgreementEntry
{
    Algorithm algorithm = Algorithm::sapg;
    std::uint64_t seed = 0;
    double max_deviation = 0.0;
    bool identical_support = false;
    std::vector<Index> support;
    Vector theta;
};

struct AgreementReport
{
    Vector reference;               // EM-pen limit
    std::vector<Index> reference_support;
    std::vector<AgreementEntry> entries;
    double tolerance = 0.0;
    bool all_within_tolerance = false;
    bool all_identical_support = false;
};

/**
 * Runs EM-pen from `reference` and every config in `runs`, comparing final
 * iterates coordinatewise to the EM-pen limit.
 */
AgreementReport limit_agreement(const LatentModel& model, const EngineConfig& reference,
                                const std::vector<EngineConfig>& runs, double tolerance);

/// -2ℓ̂ + k log N + 2 γ_E k log p.
double ebic(double loglik_hat, long support_size, long n_subjects, long candidates, double gamma_e);

/// `count` values from lambda_max down to lambda_max·min_ratio, geometric.
std::vector<double> lambda_grid(double lambda_max, long count, double min_ratio);

/// Fits with λ = `huge`, then max |∂ℓ/∂θ_i| over penalized coordinates.
double estimate_lambda_max(const LatentModel& model, const EngineConfig& config, double huge = 1e8);

struct LoglikOptions
{
    long particles = 1000;
    long pilot_burnin = 200;
    long pilot_draws = 200;
    double proposal_inflation = 1.5;
    std::uint64_t seed = 20240607;
    bool prefer_exact = true; // use the model's closed-form ℓ when it has one
};

/**
 * log p(y; θ). Closed form when available; otherwise per-subject importance
 * sampling with a Gaussian proposal centered at pilot-MCMC posterior moments.
 */
double estimate_loglik(const LatentModel& model, const Vector& theta, const LoglikOptions& options = {});

struct PathPoint
{
    double lambda = 0.0;
    Vector theta;
    std::vector<Index> support;
    Vector refit_theta; // unpenalized refit on the support; equals theta when refit is off
    double loglik = 0.0;
    double ebic = 0.0;
    bool ok = false;
    std::string error;
};

struct PathReport
{
    std::vector<PathPoint> points;
    long selected = -1; // EBIC argmin among successful points
    double gamma_e = 0.5;
    std::vector<std::string> warnings;
};

struct PathOptions
{
    double gamma_e = 0.5;
    LoglikOptions loglik;
    bool warm_start = true;
    // Score each support by the log-likelihood of an unpenalized refit restricted to
    // it; the shrunken penalized estimate understates the fit of the true support.
    bool refit = true;
    // λ used to hold off-support coordinates at zero during the refit.
    double exclusion_lambda = 1e8;
};

/// Warm-started fits along a strictly decreasing grid, scored by EBIC.
PathReport reg_path(const LatentModel& model, const EngineConfig& config, const std::vector<double>& grid,
                    const PathOptions& options = {});

} // namespace stochprox
