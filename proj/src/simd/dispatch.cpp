#include "sign/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "sign/error.hpp"

namespace sign::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(SIGN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("SIGN_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

bool backend_available(Backend backend) noexcept {
  return backend == Backend::Scalar || cpu_has_avx2();
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw Error(ErrorCode::InvalidArgument,
                "SIMD backend '" + std::string(backend_name(backend)) + "' is not available");
  }
  current().store(backend, std::memory_order_relaxed);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, ConstMatrix a, ConstMatrix b, double* c,
          std::size_t ldc, bool accumulate) {
#if defined(SIGN_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) {
    avx2::gemm(m, n, k, a, b, c, ldc, accumulate);
    return;
  }
#endif
  scalar::gemm(m, n, k, a, b, c, ldc, accumulate);
}

double dot(const double* x, const double* y, std::size_t n) {
#if defined(SIGN_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) return avx2::dot(x, y, n);
#endif
  return scalar::dot(x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#if defined(SIGN_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) {
    avx2::axpy(alpha, x, y, n);
    return;
  }
#endif
  scalar::axpy(alpha, x, y, n);
}

}  // namespace sign::simd
