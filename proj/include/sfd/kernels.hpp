#pragma once

// Dense arithmetic kernels used by the policy network.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active variant is picked once at startup from the
// CPU feature bits and can be forced for testing. Both variants use a fixed
// reduction order, so results are reproducible run to run on one machine;
// they agree with each other to rounding, not bit-for-bit.

#include <cstddef>
#include <string_view>

namespace sfd::kernels {

enum class Backend { scalar, avx2 };

/// Backend currently used by the dispatching entry points below.
Backend active_backend();

/// Force a backend. Requesting avx2 on a CPU without it throws.
void set_backend(Backend backend);

/// True when the running CPU supports the AVX2 variant.
bool avx2_supported();

std::string_view backend_name(Backend backend);

// Dispatching entry points.
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SFD_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
}  // namespace avx2
#else
#define SFD_HAVE_AVX2_KERNELS 0
#endif

}  // namespace sfd::kernels
