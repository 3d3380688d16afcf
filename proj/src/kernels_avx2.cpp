#include "modify/kernels.hpp"

#include <immintrin.h>

// No FMA on purpose: per-element mul+add keeps these bitwise equal to the
// scalar reference (the TU is also built with -ffp-contract=off so the tail
// loops cannot be contracted either).

namespace modify::kernels::avx2 {

// ---- float (8 lanes) ----

void add(const float* a, const float* b, float* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(float c, const float* x, float* out, std::int64_t n) {
  const __m256 vc = _mm256_set1_ps(c);
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(vc, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = c * x[i];
}

void axpy(float c, const float* x, float* y, std::int64_t n) {
  const __m256 vc = _mm256_set1_ps(c);
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_mul_ps(vc, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), t));
  }
  for (; i < n; ++i) y[i] = y[i] + c * x[i];
}

void lrelu(const float* x, float slope, float* out, std::int64_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_blendv_ps(_mm256_mul_ps(vs, v), v, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : slope * x[i];
}

void lrelu_mul(const float* g, const float* x, float slope, float* out, std::int64_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_blendv_ps(_mm256_mul_ps(vs, vg), vg, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.f ? g[i] : slope * g[i];
}

static float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

float dot(const float* a, const float* b, std::int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  float r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

float sum(const float* x, std::int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

// ---- double (4 lanes) ----

void add(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(double c, const double* x, double* out, std::int64_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vc, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = c * x[i];
}

void axpy(double c, const double* x, double* y, std::int64_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(vc, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
  }
  for (; i < n; ++i) y[i] = y[i] + c * x[i];
}

void lrelu(const double* x, double slope, double* out, std::int64_t n) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(_mm256_mul_pd(vs, v), v, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0. ? x[i] : slope * x[i];
}

void lrelu_mul(const double* g, const double* x, double slope, double* out, std::int64_t n) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(_mm256_mul_pd(vs, vg), vg, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0. ? g[i] : slope * g[i];
}

static double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

double dot(const double* a, const double* b, std::int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum(const double* x, std::int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

}  // namespace modify::kernels::avx2
