#include "skyalign/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <limits>

namespace skyalign::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail = std::fma(a[i], b[i], tail);
  return vaddvq_f64(acc) + tail;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return vaddvq_f64(acc) + tail;
}

double max_neon(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 2) {
    float64x2_t vm = vdupq_n_f64(m);
    for (; i + 2 <= n; i += 2) vm = vmaxq_f64(vm, vld1q_f64(x + i));
    m = vmaxvq_f64(vm);
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double squared_norm_neon(const double* x, std::size_t n) { return dot_neon(x, x, n); }

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_neon(double* x, double alpha, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
  for (; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{dot_neon,          sum_neon,  max_neon,
                                 squared_norm_neon, axpy_neon, scale_neon};
  return &table;
}

}  // namespace skyalign::kernels::detail

#else

namespace skyalign::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace skyalign::kernels::detail

#endif
