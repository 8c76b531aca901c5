#pragma once

// Dense double-precision kernels behind a runtime-selected backend.
//
// Every kernel has a portable scalar reference implementation; on x86-64 an
// AVX2+FMA variant is compiled in a separate translation unit and picked at
// first use when the CPU reports both extensions. Setting the environment
// variable SIGN_SIMD=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace sign::simd {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend backend) noexcept;
[[nodiscard]] bool backend_available(Backend backend) noexcept;
[[nodiscard]] Backend active_backend() noexcept;
// Throws sign::Error(InvalidArgument) if the backend is not available on this CPU.
void set_backend(Backend backend);

// Strided read-only matrix operand: element (i, j) lives at data[i*row_stride + j*col_stride].
struct ConstMatrix {
  const double* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;

  [[nodiscard]] ConstMatrix transposed() const noexcept { return {data, col_stride, row_stride}; }
};

// C[m x n] (row-major, leading dimension ldc) = A[m x k] * B[k x n], or += when accumulate.
void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate);

double dot(const double* x, const double* y, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Direct access to one backend, used by the equivalence tests.
namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(SIGN_HAVE_AVX2)
namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace sign::simd
