#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sfd/kernels.hpp"

namespace sfd::kernels {

namespace {

Backend detect() {
  if (const char* forced = std::getenv("SFD_KERNELS")) {
    if (std::string(forced) == "scalar") return Backend::scalar;
  }
  return avx2_supported() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

bool avx2_supported() {
#if SFD_HAVE_AVX2_KERNELS && defined(__GNUC__)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported;
#else
  return false;
#endif
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (backend == Backend::avx2 && !avx2_supported()) {
    throw std::runtime_error("avx2 kernels requested but not supported by this CPU");
  }
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
#if SFD_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) return avx2::dot(a, b, n);
#endif
  return scalar::dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#if SFD_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) return avx2::axpy(alpha, x, y, n);
#endif
  scalar::axpy(alpha, x, y, n);
}

void scale(double alpha, double* x, std::size_t n) {
#if SFD_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) return avx2::scale(alpha, x, n);
#endif
  scalar::scale(alpha, x, n);
}

}  // namespace sfd::kernels
