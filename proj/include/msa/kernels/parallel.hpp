#pragma once

namespace msa::kernels {

/// In deterministic mode every reduction runs in a fixed order, so results are
/// bitwise reproducible for a given binary regardless of thread count. The fast
/// mode lets weight-gradient reductions merge per-thread partial sums in
/// completion order.
void set_deterministic(bool on) noexcept;
bool deterministic() noexcept;

int max_threads() noexcept;

}  // namespace msa::kernels
