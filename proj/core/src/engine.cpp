#include <stochprox/engine.hpp>
#include <stochprox/parallel.hpp>
#include "serialization.hpp"

#include <cereal/archives/binary.hpp>

#include <cmath>
#include <fstream>

namespace stochprox {

namespace {

constexpr double kSupportThreshold = 1e-10;
constexpr char kCheckpointMagic[] = "stochprox-checkpoint-v1";
// Counter offset keeping burn-in sweeps apart from iteration sweeps.
constexpr std::uint64_t kBurninKey = std::uint64_t{1} << 62;

} // namespace

std::string to_string(Algorithm a)
{
    switch (a) {
        case Algorithm::pg: return "pg";
        case Algorithm::mcpg: return "mcpg";
        case Algorithm::sapg: return "sapg";
        case Algorithm::saem_pen: return "saem-pen";
        case Algorithm::mcem_pen: return "mcem-pen";
        case Algorithm::em_pen: return "em-pen";
    }
    return "sapg";
}

Algorithm algorithm_from_string(const std::string& name)
{
    if (name == "pg") return Algorithm::pg;
    if (name == "mcpg") return Algorithm::mcpg;
    if (name == "sapg") return Algorithm::sapg;
    if (name == "saem-pen" || name == "saem_pen") return Algorithm::saem_pen;
    if (name == "mcem-pen" || name == "mcem_pen") return Algorithm::mcem_pen;
    if (name == "em-pen" || name == "em_pen") return Algorithm::em_pen;
    throw ArgumentError("unknown algorithm '" + name + "'");
}

bool is_exact(Algorithm a) { return a == Algorithm::pg || a == Algorithm::em_pen; }
bool uses_mstep(Algorithm a) { return a == Algorithm::saem_pen || a == Algorithm::mcem_pen || a == Algorithm::em_pen; }
bool uses_sa(Algorithm a) { return a == Algorithm::sapg || a == Algorithm::saem_pen; }

std::string to_string(SamplerKind s)
{
    switch (s) {
        case SamplerKind::automatic: return "auto";
        case SamplerKind::exact: return "exact";
        case SamplerKind::mcmc: return "mcmc";
    }
    return "auto";
}

SamplerKind sampler_from_string(const std::string& name)
{
    if (name == "auto") return SamplerKind::automatic;
    if (name == "exact") return SamplerKind::exact;
    if (name == "mcmc") return SamplerKind::mcmc;
    throw ArgumentError("unknown sampler '" + name + "'");
}

std::string to_string(CurvatureKind c)
{
    return c == CurvatureKind::louis ? "louis" : "majorant";
}

CurvatureKind curvature_from_string(const std::string& name)
{
    if (name == "louis") return CurvatureKind::louis;
    if (name == "majorant") return CurvatureKind::majorant;
    throw ArgumentError("unknown curvature kind '" + name + "'");
}

void EngineConfig::validate(const LatentModel& model) const
{
    schedule.validate();
    penalty.validate(model.dim_theta());
    mcmc.validate();
    if (max_iter < 0) throw ArgumentError("max_iter must be >= 0");
    if (theta_stride < 1) throw ArgumentError("theta_stride must be >= 1");
    if (mcmc_burnin < 0) throw ArgumentError("mcmc burn-in must be >= 0");
    if (stop_window < 1) throw ArgumentError("stop_window must be >= 1");
    if (init_theta && init_theta->size() != model.dim_theta()) throw ArgumentError("initial theta has the wrong length");
    if (init_stat && init_stat->size() != model.dim_stat()) throw ArgumentError("initial statistic has the wrong length");
    if (init_latent && (init_latent->rows() != model.latent_dim() || init_latent->cols() != model.n_subjects())) {
        throw ArgumentError("initial latent matrix has the wrong shape");
    }
    if (is_exact(algorithm) && !model.exact_mean_stat(model.default_initial_theta())) {
        throw ArgumentError(to_string(algorithm) + " needs the exact posterior mean statistic, which " +
                            model.name() + " does not provide");
    }
    if (sampler == SamplerKind::exact && !model.has_exact_sampler()) {
        throw ArgumentError(model.name() + " has no exact posterior sampler");
    }
    if (schedule.adaptive && uses_mstep(algorithm)) {
        throw ArgumentError("adaptive step sizes apply to proximal-gradient algorithms only");
    }
}

std::vector<Index> RunTrace::support_of(const Vector& theta, const std::vector<bool>& mask)
{
    std::vector<Index> out;
    for (Index i = 0; i < theta.size(); ++i) {
        const bool penalized = mask.empty() || mask[static_cast<std::size_t>(i)];
        if (penalized && std::abs(theta[i]) > kSupportThreshold) out.push_back(i);
    }
    return out;
}

Vector stat_update_mc(const std::vector<Vector>& draws)
{
    if (draws.empty()) throw ArgumentError("Monte Carlo update needs at least one draw");
    Vector mean = Vector::Zero(draws.front().size());
    for (const auto& d : draws) {
        if (d.size() != mean.size()) throw ArgumentError("draw statistics have different lengths");
        mean += d;
    }
    return mean / static_cast<double>(draws.size());
}

Vector stat_update_sa(const Vector& prev, const std::vector<Vector>& draws, double delta)
{
    if (!(delta >= 0.0 && delta <= 1.0)) throw ArgumentError("delta must lie in [0, 1]");
    const Vector mean = stat_update_mc(draws);
    if (prev.size() != mean.size()) throw ArgumentError("statistic dimension mismatch");
    return (1.0 - delta) * prev + delta * mean;
}

Vector pg_step(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta, double gamma,
               const Vector& stat_estimate)
{
    if (!(gamma > 0.0)) throw ArgumentError("step size must be positive");
    const Vector forward = theta + gamma * gradient_surrogate(model, theta, stat_estimate);
    return prox(penalty, gamma, forward);
}

Vector pg_step(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta,
               const Vector& gammas, const Vector& stat_estimate)
{
    if (gammas.size() != theta.size()) throw ArgumentError("step vector length mismatch");
    const Vector forward = theta + gammas.cwiseProduct(gradient_surrogate(model, theta, stat_estimate));
    return prox(penalty, gammas, forward);
}

Vector mstep_exact(const LatentModel& model, const PenaltySpec& penalty, const Vector& stat_estimate,
                   const Vector& start, const CoordinateDescentOptions& options)
{
    return model.maximize_surrogate(stat_estimate, penalty, start, options);
}

std::optional<double> objective(const LatentModel& model, const PenaltySpec& penalty, const Vector& theta,
                                bool* infinite)
{
    if (infinite) *infinite = false;
    const auto ll = model.exact_loglik(theta);
    if (!ll) return std::nullopt;
    const PenaltyValue g = penalty_value(penalty, theta);
    if (g.infinite) {
        if (infinite) *infinite = true;
        return std::nullopt;
    }
    return *ll - g.value;
}

namespace {

bool use_exact_sampler(const LatentModel& model, const EngineConfig& config)
{
    switch (config.sampler) {
        case SamplerKind::exact: return true;
        case SamplerKind::mcmc: return false;
        case SamplerKind::automatic: return model.has_exact_sampler();
    }
    return false;
}

struct Batch
{
    Vector mean;
    std::vector<Vector> draws;
    SweepCounts counts;
};

Batch draw_batch(const LatentModel& model, const EngineConfig& config, EngineState& state, long n, long m,
                 bool keep_draws)
{
    const Index N = model.n_subjects();
    const Index q = model.subject_stat_dim();
    const bool exact = use_exact_sampler(model, config);
    Matrix sums = Matrix::Zero(q, N);
    std::vector<Matrix> per_draw;
    if (keep_draws) per_draw.assign(static_cast<std::size_t>(m), Matrix(q, N));
    std::vector<SweepCounts> counts(static_cast<std::size_t>(N));
    const Vector& theta = state.theta;
    parallel_for_index(N, [&](Index k) {
        Vector z(model.latent_dim());
        Vector summary(q);
        if (exact && !keep_draws) {
            CounterRng rng(config.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n), 0);
            if (model.sample_exact_stat_sum(theta, k, m, rng, summary)) {
                sums.col(k) = summary;
                return;
            }
        }
        for (long j = 0; j < m; ++j) {
            CounterRng rng(config.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n),
                           static_cast<std::uint64_t>(j));
            if (exact) {
                model.sample_exact(theta, k, rng, z);
            } else {
                auto& chain = state.mcmc.subjects[static_cast<std::size_t>(k)];
                counts[static_cast<std::size_t>(k)].add(mh_sweep_subject(model, theta, k, chain, config.mcmc, rng));
                z = chain.z;
            }
            model.subject_stat(k, z, summary);
            sums.col(k) += summary;
            if (keep_draws) per_draw[static_cast<std::size_t>(j)].col(k) = summary;
        }
    });
    Batch batch;
    batch.mean = model.assemble_stat(sums / static_cast<double>(m));
    for (const auto& c : counts) batch.counts.add(c);
    for (const auto& d : per_draw) batch.draws.push_back(model.assemble_stat(d));
    return batch;
}

void ensure_chains(const LatentModel& model, const EngineConfig& config, EngineState& state)
{
    if (state.mcmc_initialized || use_exact_sampler(model, config) || is_exact(config.algorithm)) return;
    state.mcmc = init_mcmc_state(model, state.theta, config.mcmc,
                                 config.init_latent ? &*config.init_latent : nullptr);
    for (long b = 0; b < config.mcmc_burnin; ++b) {
        mh_sweep(model, state.theta, state.mcmc, config.mcmc, config.seed, kBurninKey + static_cast<std::uint64_t>(b), 0);
    }
    state.mcmc_initialized = true;
}

TraceRow make_row(const LatentModel& model, const EngineConfig& config, const Vector& theta, long iteration)
{
    TraceRow row;
    row.iteration = iteration;
    if (config.track_objective) {
        bool infinite = false;
        row.objective = objective(model, config.penalty, theta, &infinite);
        row.objective_infinite = infinite;
    }
    row.support = static_cast<long>(RunTrace::support_of(theta, config.penalty.mask).size());
    return row;
}

void restore_fixed(const std::vector<bool>& fixed, const Vector& anchor, Vector& theta)
{
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (fixed[i]) theta[static_cast<Index>(i)] = anchor[static_cast<Index>(i)];
    }
}

void keep_theta(RunTrace& trace, long iteration, const Vector& theta, const Vector* steps)
{
    trace.theta_iterations.push_back(iteration);
    trace.thetas.push_back(theta);
    if (steps) trace.step_diagonals.push_back(*steps);
}

void add_warning(RunTrace& trace, const std::string& message)
{
    for (const auto& w : trace.warnings) {
        if (w == message) return;
    }
    trace.warnings.push_back(message);
}

} // namespace

EngineState init_engine_state(const LatentModel& model, const EngineConfig& config)
{
    config.validate(model);
    EngineState state;
    state.theta = config.init_theta ? *config.init_theta : model.default_initial_theta();
    if (model.project(state.theta)) ++state.trace.projections;
    model.validate_theta(state.theta);
    state.anchor = state.theta;
    if (config.init_stat) {
        state.stat = *config.init_stat;
        state.stat_initialized = true;
    }
    state.trace.rows.push_back(make_row(model, config, state.theta, 0));
    keep_theta(state.trace, 0, state.theta, nullptr);
    state.trace.final_theta = state.theta;
    return state;
}

void advance(const LatentModel& model, const EngineConfig& config, EngineState& state,
             const std::function<bool(const EngineState&)>& on_iteration)
{
    config.validate(model);
    RunTrace& trace = state.trace;
    const auto fixed = model.fixed_mask();
    const auto L = model.lipschitz();
    const bool exact_stats = is_exact(config.algorithm);
    const bool adaptive = config.schedule.adaptive;
    try {
        ensure_chains(model, config, state);
        while (state.iteration < config.max_iter) {
            const long n = state.iteration;
            const Vector theta_n = state.theta;
            double gamma = gamma_at(config.schedule, n);
            if (!uses_mstep(config.algorithm) && !adaptive) {
                if (L && *L > 0.0 && config.enforce_lipschitz) {
                    if (gamma > 1.0 / *L) {
                        gamma = 1.0 / *L;
                        add_warning(trace, "step size clipped to 1/L");
                    }
                } else if (!L) {
                    add_warning(trace, "no Lipschitz constant available; step sizes are used as configured");
                }
            }
            const double delta = uses_sa(config.algorithm) ? delta_at(config.schedule, n) : 1.0;
            const long m = exact_stats ? 0 : batch_at(config.schedule, n + 1);

            TraceRow row;
            Vector stat;
            std::vector<Vector> draws;
            if (exact_stats) {
                stat = *model.exact_mean_stat(theta_n);
            } else {
                Batch batch = draw_batch(model, config, state, n, m, adaptive);
                if (!use_exact_sampler(model, config)) row.acceptance = batch.counts.acceptance_rate();
                if (uses_sa(config.algorithm)) {
                    if (!state.stat_initialized) {
                        state.stat = batch.mean;
                        state.stat_initialized = true;
                    }
                    stat = (1.0 - delta) * state.stat + delta * batch.mean;
                } else {
                    stat = batch.mean;
                }
                draws = std::move(batch.draws);
                if (config.track_stat_error) {
                    if (const auto exact = model.exact_mean_stat(theta_n)) row.stat_error = (stat - *exact).norm();
                }
            }
            if (!stat.allFinite()) throw NumericError("statistic estimate is not finite at iteration " + std::to_string(n));
            state.stat = stat;
            state.stat_initialized = true;

            Vector next;
            Vector steps;
            if (uses_mstep(config.algorithm)) {
                next = mstep_exact(model, config.penalty, stat, theta_n, config.mstep);
            } else if (adaptive) {
                const Vector h = config.curvature == CurvatureKind::louis
                                     ? hessian_diag_contribution(model, theta_n, draws)
                                     : majorant_contribution(model, theta_n, draws);
                AdaptiveGammaState current = state.adaptive;
                current.iteration = n;
                const auto update = adaptive_gamma_update(current, h, delta_at(config.schedule, n), config.schedule,
                                                          config.gamma_limits);
                if (update.zero_diagonal) add_warning(trace, "curvature estimate had non-positive entries; clamped");
                state.adaptive = update.state;
                steps = update.steps;
                next = pg_step(model, config.penalty, theta_n, steps, stat);
                gamma = steps.maxCoeff();
            } else {
                next = pg_step(model, config.penalty, theta_n, gamma, stat);
            }
            restore_fixed(fixed, state.anchor, next);
            if (model.project(next)) ++trace.projections;
            restore_fixed(fixed, state.anchor, next);
            if (!next.allFinite()) throw NumericError("parameter is not finite at iteration " + std::to_string(n + 1));

            const double move = (next - theta_n).norm();
            state.theta = next;
            state.iteration = n + 1;

            TraceRow full = make_row(model, config, next, n + 1);
            full.gamma = uses_mstep(config.algorithm) ? 0.0 : gamma;
            full.delta = delta;
            full.batch = m;
            full.stat_error = row.stat_error;
            full.acceptance = row.acceptance;
            trace.rows.push_back(full);
            trace.iterations = state.iteration;
            trace.final_theta = state.theta;
            trace.final_stat = state.stat;
            if (state.iteration % config.theta_stride == 0 || state.iteration == config.max_iter) {
                keep_theta(trace, state.iteration, state.theta, adaptive ? &steps : nullptr);
            }

            if (config.stop_tolerance > 0.0) {
                const double scale = uses_mstep(config.algorithm) ? 1.0 : gamma;
                state.quiet_iterations = (move / scale < config.stop_tolerance) ? state.quiet_iterations + 1 : 0;
                if (state.quiet_iterations >= config.stop_window) {
                    trace.stopped_early = true;
                    if (trace.theta_iterations.back() != state.iteration) {
                        keep_theta(trace, state.iteration, state.theta, adaptive ? &steps : nullptr);
                    }
                    break;
                }
            }
            if (on_iteration && !on_iteration(state)) break;
        }
    } catch (const NumericError& e) {
        trace.aborted = true;
        trace.numeric_failure = true;
        trace.error = e.what();
    } catch (const ArgumentError&) {
        throw;
    } catch (const std::exception& e) {
        trace.aborted = true;
        trace.error = e.what();
    }
    trace.final_theta = state.theta;
    if (state.stat_initialized) trace.final_stat = state.stat;
}

RunTrace run(const LatentModel& model, const EngineConfig& config)
{
    EngineState state = init_engine_state(model, config);
    advance(model, config, state);
    return std::move(state.trace);
}

void save_checkpoint(const std::string& path, const EngineState& state)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    cereal::BinaryOutputArchive ar(out);
    ar(std::string(kCheckpointMagic), state);
}

EngineState load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    cereal::BinaryInputArchive ar(in);
    std::string magic;
    EngineState state;
    ar(magic);
    if (magic != kCheckpointMagic) throw ArgumentError("'" + path + "' is not a stochprox checkpoint");
    ar(state);
    return state;
}

} // namespace stochprox
