#include <cmath>

#include "cfd/kernels.hpp"

namespace cfd::kernels {
namespace {

void scaled_subtract_scalar(const double* a, const double* b, double factor, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - factor * b[i];
}

void subtract_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

std::size_t argmax_scalar(const double* x, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double l1_norm_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double max_abs_residual_scalar(const double* te, const double* tde, const double* pie, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = std::fabs((te[i] - tde[i]) - pie[i]);
    if (r > m) m = r;
  }
  return m;
}

constexpr KernelTable kScalar{Isa::Scalar,  scaled_subtract_scalar, subtract_scalar,        argmax_scalar,
                              sum_scalar, l1_norm_scalar,         max_abs_residual_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace cfd::kernels
