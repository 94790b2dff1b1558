#include "skyalign/kernels.hpp"

#include <atomic>

#include "skyalign/errors.hpp"

namespace skyalign::kernels {

namespace {

using detail::KernelTable;

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &detail::scalar_table();
    case Backend::Avx2:
      return cpu_has_avx2() ? detail::avx2_table() : nullptr;
    case Backend::Neon:
      return detail::neon_table();
  }
  return nullptr;
}

Backend detect_backend() {
  if (table_for(Backend::Avx2)) return Backend::Avx2;
  if (table_for(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

struct Dispatch {
  std::atomic<Backend> backend;
  std::atomic<const KernelTable*> table;
  Dispatch() {
    Backend b = detect_backend();
    backend.store(b);
    table.store(table_for(b));
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

const KernelTable& active() { return *dispatch().table.load(std::memory_order_relaxed); }

}  // namespace

Backend active_backend() { return dispatch().backend.load(std::memory_order_relaxed); }

bool backend_supported(Backend b) { return table_for(b) != nullptr; }

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t)
    throw ValidationError(std::string("kernel backend not supported on this CPU: ") +
                          std::string(backend_name(b)));
  dispatch().table.store(t);
  dispatch().backend.store(b);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "?";
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("dot: size mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double max_value(std::span<const double> x) { return active().max_value(x.data(), x.size()); }

double squared_norm(std::span<const double> x) {
  return active().squared_norm(x.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ValidationError("axpy: size mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(std::span<double> x, double alpha) { active().scale(x.data(), alpha, x.size()); }

void matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  if (m.size() != rows * cols || x.size() != cols || y.size() != rows)
    throw ValidationError("matvec: shape mismatch");
  const KernelTable& t = active();
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = t.dot(m.data() + r * cols, x.data(), cols);
  }
}

}  // namespace skyalign::kernels
