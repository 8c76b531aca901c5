#include "sign/simd.hpp"

#include <algorithm>

namespace sign::simd::scalar {

void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.data[static_cast<std::ptrdiff_t>(i) * a.row_stride +
                               static_cast<std::ptrdiff_t>(p) * a.col_stride];
      const double* brow = b.data + static_cast<std::ptrdiff_t>(p) * b.row_stride;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[static_cast<std::ptrdiff_t>(j) * b.col_stride];
      }
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace sign::simd::scalar
