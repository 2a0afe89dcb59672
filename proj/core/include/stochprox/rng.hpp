#pragma once
#include <cmath>
#include <cstdint>
#include <limits>

namespace stochprox {

/**
 * Counter-based generator: a SplitMix64 stream keyed by
 * (seed, stream, a, b). Two generators built from the same key
 * produce the same sequence, independent of which thread builds them.
 *
 * Typical keys: stream = subject, a = iteration, b = draw.
 */
class CounterRng
{
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream = 0,
               std::uint64_t a = 0, std::uint64_t b = 0)
    {
        std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
        h = mix(h ^ (stream * 0xbf58476d1ce4e5b9ULL + 0x632be59bd9b4e019ULL));
        h = mix(h ^ (a * 0x94d049bb133111ebULL + 0x2545f4914f6cdd1dULL));
        h = mix(h ^ (b * 0xd6e8feb86659fd93ULL + 0x9e3779b97f4a7c15ULL));
        state_ = h;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform on the open interval (0, 1).
    double uniform()
    {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Box-Muller; the second variate is cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * M_PI * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    static std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace stochprox
