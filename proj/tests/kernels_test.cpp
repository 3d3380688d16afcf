#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "modify/kernels.hpp"
#include "modify/rng.hpp"
#include "modify/tensor.hpp"

using namespace modify;

namespace {

template <class T>
std::vector<T> random_vec(std::int64_t n, std::uint64_t seed, double lo = -2, double hi = 2) {
  rng::Rng r(seed);
  std::vector<T> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<T>(r.uniform(lo, hi));
  return v;
}

// sizes straddling the vector width, including ragged tails
const std::vector<std::int64_t> kSizes{1, 3, 7, 8, 9, 16, 31, 64, 100, 1023};

}  // namespace

TEST_CASE("dispatch reports a known backend") {
  const char* n = kernels::backend_name();
  CHECK((std::string(n) == "avx2" || std::string(n) == "scalar"));
}

TEST_CASE_TEMPLATE("elementwise kernels: avx2 matches scalar bitwise", T, float, double) {
  if (!kernels::cpu_has_avx2()) return;
  for (std::int64_t n : kSizes) {
    auto a = random_vec<T>(n, 11 + static_cast<std::uint64_t>(n));
    auto b = random_vec<T>(n, 22 + static_cast<std::uint64_t>(n));
    std::vector<T> s(a.size()), v(a.size());

    kernels::scalar::add(a.data(), b.data(), s.data(), n);
    kernels::avx2::add(a.data(), b.data(), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    kernels::scalar::sub(a.data(), b.data(), s.data(), n);
    kernels::avx2::sub(a.data(), b.data(), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    kernels::scalar::mul(a.data(), b.data(), s.data(), n);
    kernels::avx2::mul(a.data(), b.data(), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    kernels::scalar::scale(T(1.7), a.data(), s.data(), n);
    kernels::avx2::scale(T(1.7), a.data(), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    kernels::scalar::lrelu(a.data(), T(0.2), s.data(), n);
    kernels::avx2::lrelu(a.data(), T(0.2), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    kernels::scalar::lrelu_mul(b.data(), a.data(), T(0.2), s.data(), n);
    kernels::avx2::lrelu_mul(b.data(), a.data(), T(0.2), v.data(), n);
    CHECK(std::memcmp(s.data(), v.data(), sizeof(T) * s.size()) == 0);

    std::vector<T> ys = b, yv = b;
    kernels::scalar::axpy(T(-0.6), a.data(), ys.data(), n);
    kernels::avx2::axpy(T(-0.6), a.data(), yv.data(), n);
    CHECK(std::memcmp(ys.data(), yv.data(), sizeof(T) * ys.size()) == 0);
  }
}

TEST_CASE_TEMPLATE("reduction kernels: avx2 matches scalar within tolerance", T, float, double) {
  if (!kernels::cpu_has_avx2()) return;
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  for (std::int64_t n : kSizes) {
    auto a = random_vec<T>(n, 33 + static_cast<std::uint64_t>(n));
    auto b = random_vec<T>(n, 44 + static_cast<std::uint64_t>(n));
    const double ds = kernels::scalar::dot(a.data(), b.data(), n);
    const double dv = kernels::avx2::dot(a.data(), b.data(), n);
    CHECK(std::fabs(ds - dv) <= tol * (1 + std::fabs(ds)));
    const double ss = kernels::scalar::sum(a.data(), n);
    const double sv = kernels::avx2::sum(a.data(), n);
    CHECK(std::fabs(ss - sv) <= tol * (1 + std::fabs(ss)));
  }
}

TEST_CASE("lrelu semantics") {
  std::vector<float> x{-2.f, -0.5f, 0.f, 0.5f, 2.f};
  std::vector<float> out(x.size());
  kernels::lrelu(x.data(), 0.2f, out.data(), static_cast<std::int64_t>(x.size()));
  CHECK(out[0] == doctest::Approx(-0.4f));
  CHECK(out[1] == doctest::Approx(-0.1f));
  CHECK(out[2] == 0.f);
  CHECK(out[3] == 0.5f);
  CHECK(out[4] == 2.f);
}

TEST_CASE("dot against exact small case") {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(kernels::dot(a.data(), b.data(), 3) == 32.0);
}
