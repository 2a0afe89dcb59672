#include <stochprox/diagnostics.hpp>
#include <stochprox/mcmc.hpp>
#include <stochprox/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stochprox {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const std::vector<double>& v)
{
    const double top = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(top)) return top;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - top);
    return top + std::log(acc);
}

double log_normal_diag(const Vector& z, const Vector& mean, const Vector& sd)
{
    double out = 0.0;
    for (Index r = 0; r < z.size(); ++r) {
        const double u = (z[r] - mean[r]) / sd[r];
        out += -0.5 * u * u - std::log(sd[r]) - 0.5 * kLog2Pi;
    }
    return out;
}

} // namespace

SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw ArgumentError("slope fit needs two or more matching points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw ArgumentError("slope fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw ArgumentError("slope fit needs distinct x values");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        fit.max_residual = std::max(fit.max_residual, std::abs(ly[i] - fit.intercept - fit.slope * lx[i]));
    }
    return fit;
}

double predicted_rate_slope(Algorithm algorithm, const ScheduleSpec& s)
{
    switch (algorithm) {
        case Algorithm::sapg:
        case Algorithm::saem_pen:
            return -std::min(2.0 * (s.alpha - s.beta), s.beta + s.c) / 2.0;
        case Algorithm::mcpg:
        case Algorithm::mcem_pen:
            return -s.c / 2.0;
        default:
            return 0.0;
    }
}

RateReport rate_experiment(const LatentModel& model, const EngineConfig& config, long replicates)
{
    if (replicates < 1) throw ArgumentError("rate experiment needs at least one replicate");
    if (is_exact(config.algorithm)) throw ArgumentError("rate experiment needs a stochastic algorithm");
    if (!model.exact_mean_stat(model.default_initial_theta())) {
        throw ArgumentError("rate experiment needs the exact posterior mean statistic");
    }
    if (config.max_iter < 4) throw ArgumentError("rate experiment needs at least 4 iterations");
    const long T = config.max_iter;
    Matrix sq(T, replicates);
    std::vector<std::string> errors(static_cast<std::size_t>(replicates));
    parallel_for_index(replicates, [&](Index r) {
        EngineConfig c = config;
        c.seed = config.seed + static_cast<std::uint64_t>(r);
        c.track_stat_error = true;
        c.track_objective = false;
        c.theta_stride = T;
        const RunTrace trace = run(model, c);
        if (trace.aborted || static_cast<long>(trace.rows.size()) != T + 1) {
            errors[static_cast<std::size_t>(r)] = trace.error.empty() ? "incomplete run" : trace.error;
            return;
        }
        for (long n = 1; n <= T; ++n) {
            const double e = *trace.rows[static_cast<std::size_t>(n)].stat_error;
            sq(n - 1, r) = e * e;
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) throw NumericError("rate experiment replicate failed: " + e);
    }
    RateReport report;
    report.replicates = replicates;
    report.predicted_slope = predicted_rate_slope(config.algorithm, config.schedule);
    std::vector<double> xs, ys;
    for (long n = 1; n <= T; ++n) {
        report.iterations.push_back(n);
        const double l2 = std::sqrt(sq.row(n - 1).mean());
        report.l2_error.push_back(l2);
        if (n > T / 2) {
            xs.push_back(static_cast<double>(n));
            ys.push_back(l2);
        }
    }
    report.fit = fit_loglog_slope(xs, ys);
    return report;
}

AgreementReport limit_agreement(const LatentModel& model, const EngineConfig& reference,
                                const std::vector<EngineConfig>& runs, double tolerance)
{
    AgreementReport report;
    report.tolerance = tolerance;
    EngineConfig ref = reference;
    ref.algorithm = Algorithm::em_pen;
    const RunTrace ref_trace = run(model, ref);
    if (ref_trace.aborted) throw NumericError("EM-pen reference run failed: " + ref_trace.error);
    report.reference = ref_trace.final_theta;
    report.reference_support = RunTrace::support_of(report.reference, ref.penalty.mask);
    report.entries.resize(runs.size());
    parallel_for_index(static_cast<Index>(runs.size()), [&](Index i) {
        const EngineConfig& c = runs[static_cast<std::size_t>(i)];
        const RunTrace trace = run(model, c);
        AgreementEntry& e = report.entries[static_cast<std::size_t>(i)];
        e.algorithm = c.algorithm;
        e.seed = c.seed;
        e.theta = trace.final_theta;
        e.support = RunTrace::support_of(e.theta, c.penalty.mask);
        e.max_deviation = trace.aborted ? std::numeric_limits<double>::infinity()
                                        : (e.theta - report.reference).cwiseAbs().maxCoeff();
        e.identical_support = !trace.aborted && e.support == report.reference_support;
    });
    report.all_within_tolerance = true;
    report.all_identical_support = true;
    for (const auto& e : report.entries) {
        report.all_within_tolerance = report.all_within_tolerance && e.max_deviation <= tolerance;
        report.all_identical_support = report.all_identical_support && e.identical_support;
    }
    return report;
}

double ebic(double loglik_hat, long support_size, long n_subjects, long candidates, double gamma_e)
{
    if (support_size < 0 || n_subjects < 1 || candidates < 1) throw ArgumentError("ebic: invalid sizes");
    if (!(gamma_e >= 0.0 && gamma_e <= 1.0)) throw ArgumentError("ebic: gamma_E must lie in [0, 1]");
    const auto k = static_cast<double>(support_size);
    return -2.0 * loglik_hat + k * std::log(static_cast<double>(n_subjects)) +
           2.0 * gamma_e * k * std::log(static_cast<double>(candidates));
}

std::vector<double> lambda_grid(double lambda_max, long count, double min_ratio)
{
    if (!(lambda_max > 0.0)) throw ArgumentError("lambda grid needs lambda_max > 0");
    if (count < 1) throw ArgumentError("lambda grid needs at least one point");
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw ArgumentError("lambda grid ratio must lie in (0, 1)");
    std::vector<double> grid;
    for (long i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        grid.push_back(lambda_max * std::pow(min_ratio, t));
    }
    return grid;
}

double estimate_lambda_max(const LatentModel& model, const EngineConfig& config, double huge)
{
    EngineConfig c = config;
    c.penalty.lambda = huge;
    if (c.penalty.kind == PenaltyKind::none) c.penalty.kind = PenaltyKind::lasso;
    c.track_objective = false;
    c.track_stat_error = false;
    const RunTrace trace = run(model, c);
    if (trace.aborted) throw NumericError("lambda_max fit failed: " + trace.error);
    const Vector& theta = trace.final_theta;
    const auto exact = model.exact_mean_stat(theta);
    const Vector grad = gradient_surrogate(model, theta, exact ? *exact : trace.final_stat);
    return lambda_max(c.penalty, grad);
}

double estimate_loglik(const LatentModel& model, const Vector& theta, const LoglikOptions& options)
{
    if (options.prefer_exact) {
        if (const auto ll = model.exact_loglik(theta)) return *ll;
    }
    if (options.particles < 1 || options.pilot_draws < 2) throw ArgumentError("importance sampling needs particles");
    model.validate_theta(theta);
    const Index N = model.n_subjects();
    const Index R = model.latent_dim();
    McmcOptions mcmc;
    McmcState chains = init_mcmc_state(model, theta, mcmc);
    std::vector<double> per_subject(static_cast<std::size_t>(N));
    parallel_for_index(N, [&](Index k) {
        auto& chain = chains.subjects[static_cast<std::size_t>(k)];
        Vector sum = Vector::Zero(R);
        Vector sq = Vector::Zero(R);
        for (long b = 0; b < options.pilot_burnin + options.pilot_draws; ++b) {
            CounterRng rng(options.seed, static_cast<std::uint64_t>(k), 1, static_cast<std::uint64_t>(b));
            mh_sweep_subject(model, theta, k, chain, mcmc, rng);
            if (b >= options.pilot_burnin) {
                sum += chain.z;
                sq += chain.z.cwiseProduct(chain.z);
            }
        }
        const auto m = static_cast<double>(options.pilot_draws);
        const Vector mean = sum / m;
        const SubjectPrior prior = model.subject_prior(theta, k);
        Vector sd = ((sq - m * mean.cwiseProduct(mean)) / (m - 1.0)).cwiseMax(0.0).cwiseSqrt();
        for (Index r = 0; r < R; ++r) {
            // A stuck pilot chain would give a degenerate proposal.
            if (!(sd[r] > 1e-3 * prior.sd[r])) sd[r] = 0.1 * prior.sd[r];
        }
        sd *= options.proposal_inflation;
        std::vector<double> logw(static_cast<std::size_t>(options.particles));
        Vector z(R);
        for (long i = 0; i < options.particles; ++i) {
            CounterRng rng(options.seed, static_cast<std::uint64_t>(k), 2, static_cast<std::uint64_t>(i));
            for (Index r = 0; r < R; ++r) z[r] = mean[r] + sd[r] * rng.normal();
            logw[static_cast<std::size_t>(i)] = model.subject_loglik(theta, k, z) +
                                                 log_normal_diag(z, prior.mean, prior.sd) -
                                                 log_normal_diag(z, mean, sd);
        }
        per_subject[static_cast<std::size_t>(k)] =
            log_sum_exp(logw) - std::log(static_cast<double>(options.particles));
    });
    double total = 0.0;
    for (double v : per_subject) total += v;
    if (!std::isfinite(total)) throw NumericError("importance-sampling log-likelihood is not finite");
    return total;
}

PathReport reg_path(const LatentModel& model, const EngineConfig& config, const std::vector<double>& grid,
                    const PathOptions& options)
{
    if (grid.empty()) throw ArgumentError("regularization path needs a non-empty grid");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] < grid[i - 1])) throw ArgumentError("lambda grid must be strictly decreasing");
    }
    if (!(grid.back() >= 0.0)) throw ArgumentError("lambda values must be >= 0");
    PathReport report;
    report.gamma_e = options.gamma_e;
    const long candidates = std::max<long>(1, static_cast<long>(config.penalty.penalized_count()));
    EngineConfig warm = config;
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        PathPoint point;
        point.lambda = lambda;
        try {
            EngineConfig c = config;
            c.penalty.lambda = lambda;
            if (c.penalty.kind == PenaltyKind::none) c.penalty.kind = PenaltyKind::lasso;
            c.track_objective = false;
            c.track_stat_error = false;
            if (options.warm_start) {
                c.init_theta = warm.init_theta;
                c.init_stat = warm.init_stat;
                c.init_latent = warm.init_latent;
            }
            EngineState state = init_engine_state(model, c);
            advance(model, c, state);
            if (state.trace.aborted) throw NumericError(state.trace.error);
            point.theta = state.theta;
            point.support = RunTrace::support_of(point.theta, c.penalty.mask);
            point.refit_theta = point.theta;
            if (options.refit) {
                EngineConfig r = c;
                r.penalty.kind = PenaltyKind::lasso;
                r.penalty.lambda = options.exclusion_lambda;
                r.penalty.alpha = 1.0;
                if (r.penalty.mask.empty()) r.penalty.mask.assign(static_cast<std::size_t>(model.dim_theta()), true);
                for (Index i : point.support) r.penalty.mask[static_cast<std::size_t>(i)] = false;
                // Cold start: from the shrunken warm state SAEM tends to stay in the mode
                // where a random-effect variance absorbs the unpenalized effects.
                r.init_theta = config.init_theta;
                r.init_stat = config.init_stat;
                r.init_latent = config.init_latent;
                const RunTrace refit = run(model, r);
                if (refit.aborted) throw NumericError("refit failed: " + refit.error);
                point.refit_theta = refit.final_theta;
            }
            point.loglik = estimate_loglik(model, point.refit_theta, options.loglik);
            point.ebic = ebic(point.loglik, static_cast<long>(point.support.size()), model.n_subjects(), candidates,
                              options.gamma_e);
            point.ok = true;
            if (options.warm_start) {
                warm.init_theta = state.theta;
                if (state.stat_initialized && uses_sa(c.algorithm)) warm.init_stat = state.stat;
                if (state.mcmc_initialized) warm.init_latent = state.mcmc.latent();
            }
        } catch (const std::exception& e) {
            point.ok = false;
            point.error = e.what();
        }
        if (point.ok && point.ebic < best) {
            best = point.ebic;
            report.selected = static_cast<long>(report.points.size());
        }
        report.points.push_back(std::move(point));
    }
    long prev = -1;
    for (std::size_t i = 0; i < report.points.size(); ++i) {
        if (!report.points[i].ok) continue;
        const auto size = static_cast<long>(report.points[i].support.size());
        if (prev >= 0 && size < prev) {
            report.warnings.push_back("support shrinks from " + std::to_string(prev) + " to " + std::to_string(size) +
                                      " at lambda=" + std::to_string(report.points[i].lambda));
        }
        prev = size;
    }
    return report;
}

} // namespace stochprox
