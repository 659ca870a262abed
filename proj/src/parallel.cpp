#include "refield/parallel.hpp"

#include <omp.h>

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace refield {

int threads_from_environment()
{
    const char* env = std::getenv("REFIELD_THREADS");
    if (env == nullptr) {
        return 0;
    }
    int value = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
    if (ec != std::errc{} || value < 1) {
        return 0;
    }
    return value;
}

void set_thread_count(int threads)
{
    if (threads < 1) {
        threads = threads_from_environment();
    }
    if (threads < 1) {
        threads = omp_get_num_procs();
    }
    omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

} // namespace refield
