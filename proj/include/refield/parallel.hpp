#pragma once

#include <cstddef>

namespace refield {

/// Selects between the OpenMP kernel and its serial reference.
enum class Exec { serial, parallel };

/// Sets the worker count used by every OpenMP kernel. Values < 1 reset to the
/// environment default (REFIELD_THREADS, then the OpenMP runtime default).
void set_thread_count(int threads);
int thread_count();

/// Resolves REFIELD_THREADS, returning 0 when unset or invalid.
int threads_from_environment();

/// Fixed chunk size for reductions whose result must not depend on the
/// number of threads.
inline constexpr std::size_t kReductionChunk = 256;

} // namespace refield
