// Compiled with -mavx2 -mfma; only reached through the dispatcher after a CPU check.

#include "sign/simd.hpp"

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <vector>

namespace sign::simd::avx2 {
namespace {

constexpr std::size_t kMr = 4;    // rows per micro-tile
constexpr std::size_t kNr = 8;    // columns per micro-tile (two ymm of doubles)
constexpr std::size_t kKc = 256;  // depth of a packed block
constexpr std::size_t kMc = 128;
constexpr std::size_t kNc = 1024;

inline const double* at(const ConstMatrix& m, std::size_t i, std::size_t j) {
  return m.data + static_cast<std::ptrdiff_t>(i) * m.row_stride +
         static_cast<std::ptrdiff_t>(j) * m.col_stride;
}

// Packs A[ic:ic+mc, pc:pc+kc] into row panels of kMr, k-major, zero padded.
void pack_a(const ConstMatrix& a, std::size_t ic, std::size_t pc, std::size_t mc,
            std::size_t kc, double* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMr; ++r) {
        *out++ = r < rows ? *at(a, ic + ir + r, pc + p) : 0.0;
      }
    }
  }
}

// Packs B[pc:pc+kc, jc:jc+nc] into column panels of kNr, k-major, zero padded.
void pack_b(const ConstMatrix& b, std::size_t pc, std::size_t jc, std::size_t kc,
            std::size_t nc, double* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      const double* row = at(b, pc + p, jc + jr);
      if (cols == kNr && b.col_stride == 1) {
        _mm256_storeu_pd(out, _mm256_loadu_pd(row));
        _mm256_storeu_pd(out + 4, _mm256_loadu_pd(row + 4));
        out += kNr;
        continue;
      }
      for (std::size_t c = 0; c < kNr; ++c) {
        *out++ = c < cols ? row[static_cast<std::ptrdiff_t>(c) * b.col_stride] : 0.0;
      }
    }
  }
}

// C[0:rows, 0:cols] += Apanel * Bpanel over kc.
void micro_kernel(std::size_t kc, const double* ap, const double* bp, double* c, std::size_t ldc,
                  std::size_t rows, std::size_t cols) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d a = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    ap += kMr;
    bp += kNr;
  }
  if (rows == kMr && cols == kNr) {
    auto add_row = [](double* dst, __m256d lo, __m256d hi) {
      _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), lo));
      _mm256_storeu_pd(dst + 4, _mm256_add_pd(_mm256_loadu_pd(dst + 4), hi));
    };
    add_row(c, c00, c01);
    add_row(c + ldc, c10, c11);
    add_row(c + 2 * ldc, c20, c21);
    add_row(c + 3 * ldc, c30, c31);
    return;
  }
  alignas(32) std::array<double, kMr * kNr> tile{};
  _mm256_store_pd(&tile[0], c00);
  _mm256_store_pd(&tile[4], c01);
  _mm256_store_pd(&tile[8], c10);
  _mm256_store_pd(&tile[12], c11);
  _mm256_store_pd(&tile[16], c20);
  _mm256_store_pd(&tile[20], c21);
  _mm256_store_pd(&tile[24], c30);
  _mm256_store_pd(&tile[28], c31);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r * kNr + j];
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  }
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<double> a_pack;
  thread_local std::vector<double> b_pack;
  a_pack.resize(kMc * kKc);
  b_pack.resize(kNc * kKc);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(b, pc, jc, kc, nc, b_pack.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(a, ic, pc, mc, kc, a_pack.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const double* bp = b_pack.data() + jr * kc;
          const std::size_t cols = std::min(kNr, nc - jr);
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const double* ap = a_pack.data() + ir * kc;
            micro_kernel(kc, ap, bp, c + (ic + ir) * ldc + jc + jr, ldc,
                         std::min(kMr, mc - ir), cols);
          }
        }
      }
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  alignas(32) std::array<double, 4> lanes{};
  _mm256_store_pd(lanes.data(), _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace sign::simd::avx2
