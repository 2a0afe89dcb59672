#pragma once
#include <stochprox/mcmc.hpp>
#include <stochprox/model.hpp>
#include <stochprox/penalty.hpp>
#include <stochprox/schedules.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stochprox {

enum class Algorithm { pg, mcpg, sapg, saem_pen, mcem_pen, em_pen };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

/// Uses exact posterior statistics (no sampling).
bool is_exact(Algorithm a);
/// Maximization by an exact M-step instead of a proximal-gradient step.
bool uses_mstep(Algorithm a);
/// Stochastic-approximation averaging of the statistic.
bool uses_sa(Algorithm a);

enum class SamplerKind { automatic, exact, mcmc };

std::string to_string(SamplerKind s);
SamplerKind sampler_from_string(const std::string& name);

/// Curvature behind the adaptive step sizes.
enum class CurvatureKind {
    louis,    // Louis diagonal: complete information minus the batch score variance
    majorant, // row sums of the complete information (a diagonal majorant)
};

std::string to_string(CurvatureKind c);
CurvatureKind curvature_from_string(const std::string& name);

struct EngineConfig
{
    Algorithm algorithm = Algorithm::sapg;
    ScheduleSpec schedule;
    PenaltySpec penalty;
    long max_iter = 100;
    std::uint64_t seed = 1;
    std::optional<Vector> init_theta;
    std::optional<Vector> init_stat;   // S_0^sa; defaults to the first batch mean
    std::optional<Matrix> init_latent; // latent_dim × N chain start
    SamplerKind sampler = SamplerKind::automatic;
    McmcOptions mcmc;
    long mcmc_burnin = 0; // sweeps before iteration 0
    bool enforce_lipschitz = true;
    CurvatureKind curvature = CurvatureKind::louis;
    AdaptiveGammaLimits gamma_limits;
    CoordinateDescentOptions mstep;
    bool track_objective = true;  // F(θ_n) when ℓ is available
    bool track_stat_error = true; // ‖S_{n+1} - S̄(θ_n)‖ when S̄ is available
    long theta_stride = 1;        // keep θ every `theta_stride` iterations (and the last)
    double stop_tolerance = 0.0;  // > 0 enables ‖θ_{n+1}-θ_n‖/γ_{n+1} early stopping
    long stop_window = 50;

    void validate(const LatentModel& model) const;
};

struct TraceRow
{
    long iteration = 0;
    double gamma = 0.0;
    double delta = 0.0;
    long batch = 0;
    std::optional<double> objective;
    bool objective_infinite = false;
    std::optional<double> stat_error;
    long support = 0;
    std::optional<double> acceptance;

    template <class Archive>
    void serialize(Archive& ar)
    {
        ar(iteration, gamma, delta, batch, objective, objective_infinite, stat_error, support, acceptance);
    }
};

struct RunTrace
{
    std::vector<TraceRow> rows;          // one per θ_n, n = 0..iterations
    std::vector<long> theta_iterations;  // iterations whose θ is kept
    std::vector<Vector> thetas;
    std::vector<Vector> step_diagonals;  // Γ diagonals (adaptive mode), same indexing as thetas
    Vector final_theta;
    Vector final_stat;
    long iterations = 0;
    long projections = 0;
    bool stopped_early = false;
    bool aborted = false;
    bool numeric_failure = false; // the abort came from a NumericError
    std::string error;
    std::vector<std::string> warnings;

    template <class Archive>
    void serialize(Archive& ar)
    {
        ar(rows, theta_iterations, thetas, step_diagonals, final_theta, final_stat, iterations, projections,
           stopped_early, aborted, numeric_failure, error, warnings);
    }

    /// Indices with |θ_i| > 1e-10 among the masked coordinates.
    static std::vector<Index> support_of(const Vector& theta, const std::vector<bool>& mask);
};

/// Everything needed to continue a run exactly where it stopped.
struct EngineState
{
    long iteration = 0; // θ_iteration is current
    Vector theta;
    Vector anchor; // initial θ; fixed coordinates are held at these values
    Vector stat; // S^sa (or last S^mc)
    bool stat_initialized = false;
    McmcState mcmc;
    bool mcmc_initialized = false;
    AdaptiveGammaState adaptive;
    long quiet_iterations = 0;
    RunTrace trace;

    template <class Archive>
    void serialize(Archive& ar)
    {
        ar(iteration, theta, anchor, stat, stat_initialized, mcmc, mcmc_initialized, adaptive.hessian_diag,
           adaptive.iteration, adaptive.initialized, quiet_iterations, trace);
    }
};

/// S^mc: plain mean of per-draw statistics.
Vector stat_update_mc(const std::vector<Vector>& draws);

/// S^sa = (1-δ) prev + δ · mean(draws).
Vector stat_update_sa(const Vector& prev, const std::vector<Vector>& draws, double delta);

/// prox_{γ g}(θ + γ (∇φ(θ) + Ψ(θ) s)).
Vector pg_step(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta, double gamma,
               const Vector& stat_estimate);

/// Coordinatewise steps Γ_ii, used both in the gradient step and in the prox.
Vector pg_step(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta,
               const Vector& gammas, const Vector& stat_estimate);

/// argmax_θ φ(θ) + <s, ψ(θ)> - g(θ).
Vector mstep_exact(const LatentModel& model, const PenaltySpec& penalty, const Vector& stat_estimate,
                   const Vector& start, const CoordinateDescentOptions& options = {});

/// F(θ) = ℓ(θ) - g(θ) when ℓ is available.
std::optional<double> objective(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta,
                                bool* infinite = nullptr);

EngineState init_engine_state(const LatentModel& model, const EngineConfig& config);

/// Runs iterations until state.iteration == config.max_iter (or early stop / error).
/// `on_iteration` is called after every completed iteration; returning false stops the run.
void advance(const LatentModel& model, const EngineConfig& config, EngineState& state,
             const std::function<bool(const EngineState&)>& on_iteration = {});

RunTrace run(const LatentModel& model, const EngineConfig& config);

void save_checkpoint(const std::string& path, const EngineState& state);
EngineState load_checkpoint(const std::string& path);

} // namespace stochprox
