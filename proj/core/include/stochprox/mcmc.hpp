#pragma once
#include <stochprox/model.hpp>

#include <cstdint>
#include <vector>

namespace stochprox {

struct McmcOptions
{
    double target_acceptance = 0.4;
    long window = 50;          // sweeps between adaptations
    double gain_exponent = 0.6; // gain = (window count)^{-exponent}
    double sd_min = 1e-6;
    double sd_max = 1e3;
    double initial_scale = 0.5; // initial random-walk sd, as a multiple of the prior sd
    bool adapt = true;

    void validate() const;
};

/// Chain state of one subject.
struct McmcSubjectState
{
    Vector z;
    Vector rw_sd;
    Vector window_accepts; // random-walk acceptances in the current window
    long window_sweeps = 0;
    long windows_completed = 0;
    long independence_accepts = 0;
    long independence_proposals = 0;
    long rw_accepts = 0;
    long rw_proposals = 0;
    long nonfinite_rejections = 0;

    template <class Archive>
    void serialize(Archive& ar)
    {
        ar(z, rw_sd, window_accepts, window_sweeps, windows_completed, independence_accepts,
           independence_proposals, rw_accepts, rw_proposals, nonfinite_rejections);
    }
};

struct McmcState
{
    std::vector<McmcSubjectState> subjects;

    template <class Archive>
    void serialize(Archive& ar)
    {
        ar(subjects);
    }

    Matrix latent() const;
};

struct SweepCounts
{
    long independence_accepts = 0;
    long independence_proposals = 0;
    long rw_accepts = 0;
    long rw_proposals = 0;

    void add(const SweepCounts& other);
    double acceptance_rate() const;
};

/// Chains start at the prior means under θ unless z0 (latent_dim × N) is given.
McmcState init_mcmc_state(const LatentModel& model, const Vector& theta, const McmcOptions& options,
                          const Matrix* z0 = nullptr);

/// min(1, exp(log_ratio)); NaN gives 0.
double mh_accept_probability(double log_ratio);

/**
 * One sweep for subject k: an independence step proposing from the prior
 * N(m_k, diag(sd²)) (accepted on the likelihood ratio), then one Gaussian
 * random-walk step per latent coordinate. Adapts after each completed
 * window unless options.adapt is false.
 */
SweepCounts mh_sweep_subject(const LatentModel& model, const Vector& theta, Index k,
                             McmcSubjectState& state, const McmcOptions& options, CounterRng& rng);

/// Sweeps every subject; subject k draws from CounterRng(seed, k, iteration, draw).
SweepCounts mh_sweep(const LatentModel& model, const Vector& theta, McmcState& state,
                     const McmcOptions& options, std::uint64_t seed, std::uint64_t iteration,
                     std::uint64_t draw);

/// log sd += gain (observed - target), clamped; resets the window counters.
void adapt_step(McmcSubjectState& state, const McmcOptions& options);

} // namespace stochprox
