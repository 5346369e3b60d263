#include "cfd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace cfd::kernels {
namespace {

constexpr std::size_t kLanes = 2;

void scaled_subtract_neon(const double* a, const double* b, double factor, double* out, std::size_t n) {
  const float64x2_t f = vdupq_n_f64(factor);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    // vmulq + vsubq, never vfmsq: results must match the scalar kernel.
    float64x2_t prod = vmulq_f64(f, vld1q_f64(b + i));
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), prod));
  }
  for (; i < n; ++i) out[i] = a[i] - factor * b[i];
}

void subtract_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

std::size_t argmax_neon(const double* x, std::size_t n) {
  double best = x[0];
  std::size_t i = 0;
  if (n >= kLanes) {
    float64x2_t acc = vld1q_f64(x);
    for (i = kLanes; i + kLanes <= n; i += kLanes) acc = vmaxq_f64(vld1q_f64(x + i), acc);
    best = vmaxvq_f64(acc);
  }
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];
  for (i = 0; i < n; ++i)
    if (x[i] == best) return i;
  return 0;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double l1_norm_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = vaddq_f64(acc, vabsq_f64(vld1q_f64(x + i)));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double max_abs_residual_neon(const double* te, const double* tde, const double* pie, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    float64x2_t d = vsubq_f64(vld1q_f64(te + i), vld1q_f64(tde + i));
    acc = vmaxq_f64(vabsq_f64(vsubq_f64(d, vld1q_f64(pie + i))), acc);
  }
  double m = vmaxvq_f64(acc);
  for (; i < n; ++i) {
    double r = std::fabs((te[i] - tde[i]) - pie[i]);
    if (r > m) m = r;
  }
  return m;
}

constexpr KernelTable kNeon{Isa::Neon, scaled_subtract_neon, subtract_neon,         argmax_neon,
                            sum_neon,  l1_norm_neon,         max_abs_residual_neon};

}  // namespace

const KernelTable* neon_table_compiled() { return &kNeon; }

}  // namespace cfd::kernels

#else

namespace cfd::kernels {
const KernelTable* neon_table_compiled() { return nullptr; }
}  // namespace cfd::kernels

#endif
