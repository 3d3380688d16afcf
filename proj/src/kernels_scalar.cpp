#include "modify/kernels.hpp"

namespace modify::kernels::scalar {

template <class T>
static void add_impl(const T* a, const T* b, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <class T>
static void sub_impl(const T* a, const T* b, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <class T>
static void mul_impl(const T* a, const T* b, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <class T>
static void scale_impl(T c, const T* x, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = c * x[i];
}
template <class T>
static void axpy_impl(T c, const T* x, T* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = y[i] + c * x[i];
}
template <class T>
static void lrelu_impl(const T* x, T slope, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
}
template <class T>
static void lrelu_mul_impl(const T* g, const T* x, T slope, T* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : slope * g[i];
}
template <class T>
static T dot_impl(const T* a, const T* b, std::int64_t n) {
  T acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
template <class T>
static T sum_impl(const T* x, std::int64_t n) {
  T acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

#define MODIFY_DEFINE_SCALAR(T)                                                        \
  void add(const T* a, const T* b, T* out, std::int64_t n) { add_impl(a, b, out, n); } \
  void sub(const T* a, const T* b, T* out, std::int64_t n) { sub_impl(a, b, out, n); } \
  void mul(const T* a, const T* b, T* out, std::int64_t n) { mul_impl(a, b, out, n); } \
  void scale(T c, const T* x, T* out, std::int64_t n) { scale_impl(c, x, out, n); }    \
  void axpy(T c, const T* x, T* y, std::int64_t n) { axpy_impl(c, x, y, n); }          \
  void lrelu(const T* x, T slope, T* out, std::int64_t n) { lrelu_impl(x, slope, out, n); } \
  void lrelu_mul(const T* g, const T* x, T slope, T* out, std::int64_t n) {            \
    lrelu_mul_impl(g, x, slope, out, n);                                               \
  }                                                                                    \
  T dot(const T* a, const T* b, std::int64_t n) { return dot_impl(a, b, n); }          \
  T sum(const T* x, std::int64_t n) { return sum_impl(x, n); }

MODIFY_DEFINE_SCALAR(float)
MODIFY_DEFINE_SCALAR(double)

#undef MODIFY_DEFINE_SCALAR

}  // namespace modify::kernels::scalar
