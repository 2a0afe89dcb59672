#pragma once
#include <stochprox/types.hpp>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include <memory>

namespace stochprox {

/// Runs f(i) for i in [0, n) on the TBB pool. Callers write only to slot i,
/// so results never depend on scheduling.
template <class F>
void parallel_for_index(Index n, F&& f)
{
    if (n <= 0) return;
    tbb::parallel_for(tbb::blocked_range<Index>(0, n, 1), [&](const tbb::blocked_range<Index>& range) {
        for (Index i = range.begin(); i != range.end(); ++i) f(i);
    });
}

/// Caps the worker count for its lifetime; 0 leaves the default.
class ThreadLimit
{
public:
    explicit ThreadLimit(std::size_t threads)
    {
        if (threads > 0) {
            control_ = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, threads);
        }
    }

private:
    std::unique_ptr<tbb::global_control> control_;
};

} // namespace stochprox
