#include "vexp.hpp"

#include <cmath>

#if defined(ITERFLOW_HAVE_MVEC) && defined(__x86_64__)
#include <immintrin.h>
extern "C" __m256d _ZGVdN4v_exp(__m256d);
#define ITERFLOW_VEXP_AVX2 1
#endif

namespace iterflow::kernels::detail {

namespace {

#ifdef ITERFLOW_VEXP_AVX2
__attribute__((target("avx2"))) void exp_avx2(double* v, std::size_t n) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) _mm256_storeu_pd(v + k, _ZGVdN4v_exp(_mm256_loadu_pd(v + k)));
  if (k < n) {
    alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = k; j < n; ++j) tail[j - k] = v[j];
    _mm256_store_pd(tail, _ZGVdN4v_exp(_mm256_load_pd(tail)));
    for (std::size_t j = k; j < n; ++j) v[j] = tail[j - k];
  }
}

bool use_avx2() noexcept {
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok;
}
#endif

}  // namespace

void exp_in_place(double* v, std::size_t n) {
#ifdef ITERFLOW_VEXP_AVX2
  if (use_avx2()) {
    exp_avx2(v, n);
    return;
  }
#endif
  for (std::size_t k = 0; k < n; ++k) v[k] = std::exp(v[k]);
}

const char* exp_backend() noexcept {
#ifdef ITERFLOW_VEXP_AVX2
  if (use_avx2()) return "libmvec-avx2";
#endif
  return "std::exp";
}

}  // namespace iterflow::kernels::detail
