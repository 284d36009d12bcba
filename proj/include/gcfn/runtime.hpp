#pragma once

#include <cstddef>

namespace gcfn {

// Keeps large training buffers on the heap instead of a fresh mmap per
// allocation; a no-op outside glibc.
void tune_allocator();

// Positive integer from the environment variable, else `fallback`. Throws
// ConfigError on a malformed value.
std::size_t thread_count_from_env(const char* name = "GCFN_THREADS", std::size_t fallback = 1);

}  // namespace gcfn
