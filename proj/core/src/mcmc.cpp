#include <stochprox/mcmc.hpp>
#include <stochprox/parallel.hpp>

#include <algorithm>
#include <cmath>

namespace stochprox {

void McmcOptions::validate() const
{
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) throw ArgumentError("target acceptance must lie in (0, 1)");
    if (window < 1) throw ArgumentError("adaptation window must be >= 1");
    if (!(gain_exponent > 0.0 && gain_exponent <= 1.0)) throw ArgumentError("gain exponent must lie in (0, 1]");
    if (!(sd_min > 0.0 && sd_min < sd_max)) throw ArgumentError("need 0 < sd_min < sd_max");
    if (!(initial_scale > 0.0)) throw ArgumentError("initial scale must be positive");
}

Matrix McmcState::latent() const
{
    if (subjects.empty()) return {};
    Matrix z(subjects.front().z.size(), static_cast<Index>(subjects.size()));
    for (std::size_t k = 0; k < subjects.size(); ++k) z.col(static_cast<Index>(k)) = subjects[k].z;
    return z;
}

void SweepCounts::add(const SweepCounts& other)
{
    independence_accepts += other.independence_accepts;
    independence_proposals += other.independence_proposals;
    rw_accepts += other.rw_accepts;
    rw_proposals += other.rw_proposals;
}

double SweepCounts::acceptance_rate() const
{
    return rw_proposals > 0 ? static_cast<double>(rw_accepts) / static_cast<double>(rw_proposals) : 0.0;
}

McmcState init_mcmc_state(const LatentModel& model, const Vector& theta, const McmcOptions& options,
                          const Matrix* z0)
{
    options.validate();
    const Index N = model.n_subjects();
    const Index R = model.latent_dim();
    if (z0 && (z0->rows() != R || z0->cols() != N)) throw ArgumentError("initial latent matrix has the wrong shape");
    McmcState state;
    state.subjects.resize(static_cast<std::size_t>(N));
    for (Index k = 0; k < N; ++k) {
        const SubjectPrior prior = model.subject_prior(theta, k);
        auto& s = state.subjects[static_cast<std::size_t>(k)];
        s.z = z0 ? Vector(z0->col(k)) : prior.mean;
        s.rw_sd = (options.initial_scale * prior.sd).cwiseMax(options.sd_min).cwiseMin(options.sd_max);
        s.window_accepts = Vector::Zero(R);
    }
    return state;
}

double mh_accept_probability(double log_ratio)
{
    if (std::isnan(log_ratio)) return 0.0;
    if (log_ratio >= 0.0) return 1.0;
    return std::exp(log_ratio);
}

namespace {

bool accept(double log_ratio, CounterRng& rng)
{
    const double u = rng.uniform();
    return std::log(u) < log_ratio && !std::isnan(log_ratio);
}

} // namespace

void adapt_step(McmcSubjectState& state, const McmcOptions& options)
{
    if (state.window_sweeps <= 0) return;
    ++state.windows_completed;
    const double gain = std::pow(static_cast<double>(state.windows_completed), -options.gain_exponent);
    for (Index r = 0; r < state.rw_sd.size(); ++r) {
        const double observed = state.window_accepts[r] / static_cast<double>(state.window_sweeps);
        const double sd = state.rw_sd[r] * std::exp(gain * (observed - options.target_acceptance));
        state.rw_sd[r] = std::clamp(sd, options.sd_min, options.sd_max);
    }
    state.window_accepts.setZero();
    state.window_sweeps = 0;
}

SweepCounts mh_sweep_subject(const LatentModel& model, const Vector& theta, Index k,
                             McmcSubjectState& state, const McmcOptions& options, CounterRng& rng)
{
    const Index R = model.latent_dim();
    const SubjectPrior prior = model.subject_prior(theta, k);
    SweepCounts counts;
    Vector& z = state.z;
    double ll = model.subject_loglik(theta, k, z);

    // Independence proposal from the prior: the prior cancels in the MH ratio.
    Vector proposal(R);
    for (Index r = 0; r < R; ++r) proposal[r] = prior.mean[r] + prior.sd[r] * rng.normal();
    const double ll_prop = model.subject_loglik(theta, k, proposal);
    ++counts.independence_proposals;
    if (!std::isfinite(ll_prop)) {
        ++state.nonfinite_rejections;
        rng.uniform();
    } else if (!std::isfinite(ll) || accept(ll_prop - ll, rng)) {
        z = proposal;
        ll = ll_prop;
        ++counts.independence_accepts;
    }

    for (Index r = 0; r < R; ++r) {
        const double old = z[r];
        const double step = state.rw_sd[r] * rng.normal();
        const double u = rng.uniform();
        z[r] = old + step;
        const double ll_new = model.subject_loglik(theta, k, z);
        ++counts.rw_proposals;
        bool ok = false;
        if (!std::isfinite(ll_new)) {
            ++state.nonfinite_rejections;
        } else {
            const double inv = 1.0 / (prior.sd[r] * prior.sd[r]);
            const double d_old = old - prior.mean[r];
            const double d_new = z[r] - prior.mean[r];
            const double log_ratio = ll_new - ll - 0.5 * inv * (d_new * d_new - d_old * d_old);
            ok = !std::isfinite(ll) || std::log(u) < log_ratio;
        }
        if (ok) {
            ll = ll_new;
            ++counts.rw_accepts;
            state.window_accepts[r] += 1.0;
        } else {
            z[r] = old;
        }
    }

    state.independence_accepts += counts.independence_accepts;
    state.independence_proposals += counts.independence_proposals;
    state.rw_accepts += counts.rw_accepts;
    state.rw_proposals += counts.rw_proposals;
    if (options.adapt) {
        ++state.window_sweeps;
        if (state.window_sweeps >= options.window) adapt_step(state, options);
    }
    return counts;
}

SweepCounts mh_sweep(const LatentModel& model, const Vector& theta, McmcState& state,
                     const McmcOptions& options, std::uint64_t seed, std::uint64_t iteration,
                     std::uint64_t draw)
{
    const Index N = model.n_subjects();
    if (static_cast<Index>(state.subjects.size()) != N) throw ArgumentError("MCMC state does not match the model");
    std::vector<SweepCounts> per_subject(static_cast<std::size_t>(N));
    parallel_for_index(N, [&](Index k) {
        CounterRng rng(seed, static_cast<std::uint64_t>(k), iteration, draw);
        per_subject[static_cast<std::size_t>(k)] =
            mh_sweep_subject(model, theta, k, state.subjects[static_cast<std::size_t>(k)], options, rng);
    });
    SweepCounts total;
    for (const auto& c : per_subject) total.add(c);
    return total;
}

} // namespace stochprox
