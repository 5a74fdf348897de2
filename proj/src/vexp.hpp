#pragma once

#include <cstddef>

namespace iterflow::kernels::detail {

// v[k] = exp(v[k]). Every element goes through the same routine regardless of its position,
// so a value never depends on n or on where it sits in the buffer. Uses the glibc vector
// math library when the build found it and the CPU supports AVX2, std::exp otherwise.
void exp_in_place(double* v, std::size_t n);

// Name of the exp backend chosen at runtime, for benchmarks and diagnostics.
const char* exp_backend() noexcept;

}  // namespace iterflow::kernels::detail
