// Built with -mavx2 and only reached after a runtime CPU check.

#include "cfd/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace cfd::kernels {
namespace {

constexpr std::size_t kLanes = 4;

void scaled_subtract_avx2(const double* a, const double* b, double factor, double* out, std::size_t n) {
  const __m256d f = _mm256_set1_pd(factor);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d prod = _mm256_mul_pd(f, _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), prod));
  }
  for (; i < n; ++i) out[i] = a[i] - factor * b[i];
}

void subtract_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

double hmax(__m256d v) {
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, v);
  double m = lanes[0];
  for (std::size_t k = 1; k < kLanes; ++k)
    if (lanes[k] > m) m = lanes[k];
  return m;
}

std::size_t argmax_avx2(const double* x, std::size_t n) {
  // Pass 1: the maximum value. Pass 2: its first position.
  double best = x[0];
  std::size_t i = 0;
  if (n >= kLanes) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = kLanes; i + kLanes <= n; i += kLanes) acc = _mm256_max_pd(_mm256_loadu_pd(x + i), acc);
    best = hmax(acc);
  }
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];

  const __m256d target = _mm256_set1_pd(best);
  i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(x + i), target, _CMP_EQ_OQ));
    if (mask) return i + static_cast<std::size_t>(__builtin_ctz(static_cast<unsigned>(mask)));
  }
  for (; i < n; ++i)
    if (x[i] == best) return i;
  return 0;
}

double hsum(__m256d v) {
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

double l1_norm_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = _mm256_add_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
  double s = hsum(acc);
  for (; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double max_abs_residual_avx2(const double* te, const double* tde, const double* pie, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(te + i), _mm256_loadu_pd(tde + i));
    __m256d r = abs_pd(_mm256_sub_pd(d, _mm256_loadu_pd(pie + i)));
    acc = _mm256_max_pd(r, acc);
  }
  double m = hmax(acc);
  for (; i < n; ++i) {
    double r = std::fabs((te[i] - tde[i]) - pie[i]);
    if (r > m) m = r;
  }
  return m;
}

constexpr KernelTable kAvx2{Isa::Avx2, scaled_subtract_avx2, subtract_avx2,         argmax_avx2,
                            sum_avx2,  l1_norm_avx2,         max_abs_residual_avx2};

}  // namespace

const KernelTable* avx2_table_compiled() { return &kAvx2; }

}  // namespace cfd::kernels

#else

namespace cfd::kernels {
const KernelTable* avx2_table_compiled() { return nullptr; }
}  // namespace cfd::kernels

#endif
