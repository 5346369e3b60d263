#pragma once

// Vocabulary-wide arithmetic used by the decoder and the effect analysis.
//
// Every kernel has a scalar reference implementation; SIMD variants (AVX2 on
// x86-64, NEON on AArch64) are chosen at runtime from what the CPU supports.
// Elementwise kernels and argmax/max reductions are bit-identical across
// variants. Summing kernels may differ in the last bits because lanes
// accumulate in a different order.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace cfd::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  // out[i] = a[i] - factor * b[i]   (no fused multiply-add)
  void (*scaled_subtract)(const double* a, const double* b, double factor, double* out, std::size_t n);
  // out[i] = a[i] - b[i]
  void (*subtract)(const double* a, const double* b, double* out, std::size_t n);
  // Index of the maximum; lowest index wins ties. n > 0.
  std::size_t (*argmax)(const double* x, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*l1_norm)(const double* x, std::size_t n);
  // max_i |(te[i] - tde[i]) - pie[i]|
  double (*max_abs_residual)(const double* te, const double* tde, const double* pie, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Variants usable on this machine, scalar first.
std::vector<Isa> available();

// The table used by the span wrappers below. Defaults to the widest
// available variant; CFD_ISA=scalar|avx2|neon in the environment overrides.
const KernelTable& active();
// Throws DomainError if `isa` is not available.
void set_active(Isa isa);

// RAII override of the active table, for tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  const KernelTable* previous_;
};

// Checked wrappers over active(). Size mismatches throw SizeMismatchError.
void scaled_subtract(std::span<const double> a, std::span<const double> b, double factor, std::span<double> out);
void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out);
std::size_t argmax(std::span<const double> x);
double sum(std::span<const double> x);
double l1_norm(std::span<const double> x);
double max_abs_residual(std::span<const double> te, std::span<const double> tde, std::span<const double> pie);

}  // namespace cfd::kernels
