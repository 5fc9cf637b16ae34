#include "msa/kernels/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msa::kernels {

namespace {
std::atomic<bool> g_deterministic{true};
}

void set_deterministic(bool on) noexcept { g_deterministic.store(on, std::memory_order_relaxed); }

bool deterministic() noexcept { return g_deterministic.load(std::memory_order_relaxed); }

int max_threads() noexcept
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace msa::kernels
