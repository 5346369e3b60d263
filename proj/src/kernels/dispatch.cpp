#include <atomic>
#include <cstdlib>
#include <string>

#include "cfd/error.hpp"
#include "cfd/kernels.hpp"

namespace cfd::kernels {

const KernelTable* avx2_table_compiled();
const KernelTable* neon_table_compiled();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* find(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return &scalar_table();
    case Isa::Avx2: return avx2_table();
    case Isa::Neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("CFD_ISA"); env != nullptr && *env != '\0') {
    std::string want(env);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon})
      if (want == to_string(isa))
        if (const auto* t = find(isa)) return t;
  }
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw SizeMismatchError(std::string(what) + ": lengths " + std::to_string(a) + " and " + std::to_string(b) +
                            " differ");
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "?";
}

const KernelTable* avx2_table() {
  static const KernelTable* table = cpu_has_avx2() ? avx2_table_compiled() : nullptr;
  return table;
}

// Every AArch64 core has Advanced SIMD, so compiling it in is enough.
const KernelTable* neon_table() { return neon_table_compiled(); }

std::vector<Isa> available() {
  std::vector<Isa> out{Isa::Scalar};
  if (avx2_table()) out.push_back(Isa::Avx2);
  if (neon_table()) out.push_back(Isa::Neon);
  return out;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) {
  const auto* t = find(isa);
  if (!t) throw DomainError("kernel variant " + std::string(to_string(isa)) + " is not available");
  active_slot().store(t, std::memory_order_release);
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(&active()) { set_active(isa); }

ScopedIsa::~ScopedIsa() { active_slot().store(previous_, std::memory_order_release); }

void scaled_subtract(std::span<const double> a, std::span<const double> b, double factor, std::span<double> out) {
  check_same(a.size(), b.size(), "scaled_subtract");
  check_same(a.size(), out.size(), "scaled_subtract");
  active().scaled_subtract(a.data(), b.data(), factor, out.data(), a.size());
}

void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_same(a.size(), b.size(), "subtract");
  check_same(a.size(), out.size(), "subtract");
  active().subtract(a.data(), b.data(), out.data(), a.size());
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw DomainError("argmax of an empty vector");
  return active().argmax(x.data(), x.size());
}

double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double l1_norm(std::span<const double> x) { return active().l1_norm(x.data(), x.size()); }

double max_abs_residual(std::span<const double> te, std::span<const double> tde, std::span<const double> pie) {
  check_same(te.size(), tde.size(), "max_abs_residual");
  check_same(te.size(), pie.size(), "max_abs_residual");
  return active().max_abs_residual(te.data(), tde.data(), pie.data(), te.size());
}

}  // namespace cfd::kernels
