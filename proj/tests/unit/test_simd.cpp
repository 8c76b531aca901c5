#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sign/simd.hpp"

namespace {

using sign::simd::ConstMatrix;

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Triple-loop oracle with no shared code paths with either backend.
std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t k,
                               const std::vector<double>& a, bool a_trans,
                               const std::vector<double>& b, bool b_trans) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a_trans ? a[p * m + i] : a[i * k + p];
        const double bv = b_trans ? b[j * k + p] : b[p * n + j];
        acc += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(acc);
    }
  return c;
}

TEST(Simd, ScalarGemmMatchesOracleOnAllTransposes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 5, 7}, {17, 4, 25}, {9, 33, 2}}) {
    for (bool at : {false, true}) {
      for (bool bt : {false, true}) {
        std::vector<double> a(m * k), b(k * n);
        for (double& x : a) x = u(rng);
        for (double& x : b) x = u(rng);
        ConstMatrix am = at ? ConstMatrix{a.data(), 1, m} : ConstMatrix{a.data(), k, 1};
        ConstMatrix bm = bt ? ConstMatrix{b.data(), 1, k} : ConstMatrix{b.data(), n, 1};
        std::vector<double> c(m * n, 99.0);
        sign::simd::scalar::gemm(m, n, k, am, bm, c.data(), n, false);
        EXPECT_LT(max_abs_diff(c, naive_gemm(m, n, k, a, at, b, bt)), 1e-12);
      }
    }
  }
}

#if defined(SIGN_HAVE_AVX2)
class Avx2Equivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!sign::simd::backend_available(sign::simd::Backend::Avx2)) GTEST_SKIP() << "no AVX2";
  }
};

TEST_F(Avx2Equivalence, GemmMatchesScalarAcrossShapesAndStrides) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> dim(1, 70);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng), k = trial % 10 == 0 ? 300 : dim(rng);
    const bool at = trial % 2, bt = (trial / 2) % 2, acc = (trial / 4) % 2;
    std::vector<double> a(m * k), b(k * n), c0(m * n);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    for (double& x : c0) x = u(rng);
    const std::ptrdiff_t M = m, N = n, K = k;
    ConstMatrix am = at ? ConstMatrix{a.data(), 1, M} : ConstMatrix{a.data(), K, 1};
    ConstMatrix bm = bt ? ConstMatrix{b.data(), 1, K} : ConstMatrix{b.data(), N, 1};
    std::vector<double> c_scalar = c0, c_simd = c0;
    sign::simd::scalar::gemm(m, n, k, am, bm, c_scalar.data(), n, acc);
    sign::simd::avx2::gemm(m, n, k, am, bm, c_simd.data(), n, acc);
    ASSERT_LT(max_abs_diff(c_scalar, c_simd), 1e-12 * static_cast<double>(k))
        << "m=" << m << " n=" << n << " k=" << k;
  }
}

TEST_F(Avx2Equivalence, GemmRespectsLeadingDimension) {
  const std::size_t m = 5, n = 9, k = 4, ldc = 16;
  std::vector<double> a(m * k, 1.0), b(k * n, 2.0), c(m * ldc, -1.0);
  sign::simd::avx2::gemm(m, n, k, {a.data(), 4, 1}, {b.data(), 9, 1}, c.data(), ldc, false);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ldc; ++j) EXPECT_EQ(c[i * ldc + j], j < n ? 8.0 : -1.0);
  }
}

TEST_F(Avx2Equivalence, DotAndAxpyMatchScalar) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 64u, 1001u}) {
    std::vector<double> x(n), y(n);
    for (double& v : x) v = u(rng);
    for (double& v : y) v = u(rng);
    EXPECT_NEAR(sign::simd::avx2::dot(x.data(), y.data(), n),
                sign::simd::scalar::dot(x.data(), y.data(), n), 1e-12);
    std::vector<double> y1 = y, y2 = y;
    sign::simd::avx2::axpy(0.75, x.data(), y1.data(), n);
    sign::simd::scalar::axpy(0.75, x.data(), y2.data(), n);
    EXPECT_LT(max_abs_diff(y1, y2), 1e-15);
  }
}
#endif

TEST(Simd, BackendCanBeForcedToScalar) {
  const auto before = sign::simd::active_backend();
  sign::simd::set_backend(sign::simd::Backend::Scalar);
  EXPECT_EQ(sign::simd::active_backend(), sign::simd::Backend::Scalar);
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4);
  sign::simd::gemm(2, 2, 2, {a.data(), 2, 1}, {b.data(), 2, 1}, c.data(), 2, false);
  EXPECT_EQ(c, (std::vector<double>{19, 22, 43, 50}));
  sign::simd::set_backend(before);
}

}  // namespace
