#include "modify/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(__i386__)
#include <cpuid.h>
#endif

namespace modify::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  unsigned eax = 0, ebx = 0, ecx = 0, edx = 0;
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
  return (ebx & bit_AVX2) != 0;
#else
  return false;
#endif
}

static Backend resolve() {
  if (const char* env = std::getenv("MODIFY_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::Avx2;
    return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

Backend active() {
  static const Backend b = resolve();
  return b;
}

const char* backend_name() {
  return active() == Backend::Avx2 ? "avx2" : "scalar";
}

#define MODIFY_DISPATCH(T)                                                            \
  void add(const T* a, const T* b, T* out, std::int64_t n) {                          \
    active() == Backend::Avx2 ? avx2::add(a, b, out, n) : scalar::add(a, b, out, n);  \
  }                                                                                   \
  void sub(const T* a, const T* b, T* out, std::int64_t n) {                          \
    active() == Backend::Avx2 ? avx2::sub(a, b, out, n) : scalar::sub(a, b, out, n);  \
  }                                                                                   \
  void mul(const T* a, const T* b, T* out, std::int64_t n) {                          \
    active() == Backend::Avx2 ? avx2::mul(a, b, out, n) : scalar::mul(a, b, out, n);  \
  }                                                                                   \
  void scale(T c, const T* x, T* out, std::int64_t n) {                               \
    active() == Backend::Avx2 ? avx2::scale(c, x, out, n) : scalar::scale(c, x, out, n); \
  }                                                                                   \
  void axpy(T c, const T* x, T* y, std::int64_t n) {                                  \
    active() == Backend::Avx2 ? avx2::axpy(c, x, y, n) : scalar::axpy(c, x, y, n);    \
  }                                                                                   \
  void lrelu(const T* x, T slope, T* out, std::int64_t n) {                           \
    active() == Backend::Avx2 ? avx2::lrelu(x, slope, out, n)                         \
                              : scalar::lrelu(x, slope, out, n);                      \
  }                                                                                   \
  void lrelu_mul(const T* g, const T* x, T slope, T* out, std::int64_t n) {           \
    active() == Backend::Avx2 ? avx2::lrelu_mul(g, x, slope, out, n)                  \
                              : scalar::lrelu_mul(g, x, slope, out, n);               \
  }                                                                                   \
  T dot(const T* a, const T* b, std::int64_t n) {                                     \
    return active() == Backend::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);     \
  }                                                                                   \
  T sum(const T* x, std::int64_t n) {                                                 \
    return active() == Backend::Avx2 ? avx2::sum(x, n) : scalar::sum(x, n);           \
  }

MODIFY_DISPATCH(float)
MODIFY_DISPATCH(double)

#undef MODIFY_DISPATCH

}  // namespace modify::kernels
