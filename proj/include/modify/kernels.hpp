#pragma once

#include <cstdint>

// Arithmetic inner loops used by the tensor/autodiff layer. Every kernel has
// a scalar reference implementation and, for the hot float/double paths, an
// AVX2 variant. The dispatched entry points pick a backend once per process
// (CPU detection, overridable with MODIFY_KERNELS=scalar|avx2).
//
// Elementwise kernels (add/sub/mul/scale/axpy/lrelu/lrelu_mul) perform the
// same per-element IEEE operations in both backends and must match the scalar
// reference bitwise. Reductions (dot/sum) reassociate and only match within a
// small relative tolerance.

namespace modify::kernels {

enum class Backend { Scalar, Avx2 };

Backend active();
const char* backend_name();
bool cpu_has_avx2();

#define MODIFY_KERNEL_SET(T)                                                 \
  void add(const T* a, const T* b, T* out, std::int64_t n);                  \
  void sub(const T* a, const T* b, T* out, std::int64_t n);                  \
  void mul(const T* a, const T* b, T* out, std::int64_t n);                  \
  void scale(T c, const T* x, T* out, std::int64_t n);                       \
  void axpy(T c, const T* x, T* y, std::int64_t n);                          \
  void lrelu(const T* x, T slope, T* out, std::int64_t n);                   \
  void lrelu_mul(const T* g, const T* x, T slope, T* out, std::int64_t n);   \
  T dot(const T* a, const T* b, std::int64_t n);                             \
  T sum(const T* x, std::int64_t n);

namespace scalar {
MODIFY_KERNEL_SET(float)
MODIFY_KERNEL_SET(double)
}  // namespace scalar

namespace avx2 {
MODIFY_KERNEL_SET(float)
MODIFY_KERNEL_SET(double)
}  // namespace avx2

MODIFY_KERNEL_SET(float)
MODIFY_KERNEL_SET(double)

#undef MODIFY_KERNEL_SET

}  // namespace modify::kernels
