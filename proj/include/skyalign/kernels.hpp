#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace skyalign::kernels {

// Vector arithmetic used by the embedding/loss code. Every kernel exists as a
// scalar reference implementation plus SIMD variants (AVX2 on x86-64, NEON on
// aarch64). The backend is selected once at runtime from CPU capabilities and
// can be pinned programmatically, which the equivalence tests rely on.
//
// axpy and scale are element-wise with fused multiply-add on every backend
// (std::fma in the scalar path), so their results are bit-identical across
// backends. Reductions (dot, sum, squared_norm) associate differently per
// backend and agree only to rounding.

enum class Backend { Scalar, Avx2, Neon };

Backend active_backend();
bool backend_supported(Backend b);
void set_backend(Backend b);  // throws ValidationError if unsupported on this CPU
std::string_view backend_name(Backend b);

double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> x);
double max_value(std::span<const double> x);  // -inf on empty input
double squared_norm(std::span<const double> x);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// x *= alpha
void scale(std::span<double> x, double alpha);

// y = M x for row-major M of shape rows x cols.
void matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);

namespace detail {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  double (*squared_norm)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double*, double, std::size_t);
};

const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();

}  // namespace detail

}  // namespace skyalign::kernels
