#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"
#include "hlte/rng.hpp"

using namespace hlte;

TEST_CASE("sigmoid basics") {
  CHECK(num::sigmoid(0.0) == 0.5);
  CHECK(num::sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(num::sigmoid(800.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(num::sigmoid(-800.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::isfinite(num::sigmoid(700.0)));
  CHECK(std::isfinite(num::sigmoid(-700.0)));
  CHECK_THROWS_AS(num::sigmoid(std::nan("")), DomainError);
  CHECK_THROWS_AS(num::sigmoid(INFINITY), DomainError);
}

TEST_CASE("sigmoid symmetry and logit inverse") {
  num::RngStream rng(7, 0);
  for (int i = 0; i < 200; ++i) {
    double z = rng.uniform(-30.0, 30.0);
    CHECK(num::sigmoid(z) + num::sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (int i = 0; i < 200; ++i) {
    double p = rng.uniform(1e-6, 1.0 - 1e-6);
    CHECK(num::sigmoid(num::logit(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(num::logit(0.0), DomainError);
  CHECK_THROWS_AS(num::logit(1.0), DomainError);
}

TEST_CASE("trim clamps and validates eta") {
  CHECK(num::trim(0.05, 0.1) == 0.1);
  CHECK(num::trim(0.95, 0.1) == doctest::Approx(0.9));
  CHECK(num::trim(0.5, 0.1) == 0.5);
  CHECK(num::trim(0.97, 0.01) == 0.97);
  // idempotent
  num::RngStream rng(3, 1);
  for (int i = 0; i < 100; ++i) {
    double u = rng.uniform(-1.0, 2.0);
    double once = num::trim(u, 0.1);
    CHECK(num::trim(once, 0.1) == once);
  }
  CHECK_THROWS_AS(num::trim(0.5, 0.6), ConfigError);
  CHECK_THROWS_AS(num::trim(0.5, 0.0), ConfigError);
  CHECK_THROWS_AS(num::trim(0.5, -0.1), ConfigError);
}

TEST_CASE("summarize mean and unbiased variance") {
  auto st = num::summarize({2.0, 2.0, 2.0});
  CHECK(st.mean == 2.0);
  CHECK(st.variance == 0.0);
  CHECK_FALSE(st.degenerate);

  st = num::summarize({0.0, 2.0});
  CHECK(st.mean == 1.0);
  CHECK(st.variance == 2.0);  // divisor n-1

  st = num::summarize({1.0});
  CHECK(st.mean == 1.0);
  CHECK(st.variance == 0.0);
  CHECK(st.degenerate);

  CHECK_THROWS_AS(num::summarize({}), DomainError);
  CHECK_THROWS_AS(num::summarize({1.0, std::nan("")}), DomainError);
}

TEST_CASE("rng streams replay bit-identically") {
  num::RngStream a(42, 9);
  num::RngStream b(42, 9);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());

  // normals, uniforms and shuffles replay too
  num::RngStream c(1, 2), d(1, 2);
  std::vector<int> v1(100), v2(100);
  for (int i = 0; i < 100; ++i) v1[i] = v2[i] = i;
  c.shuffle(v1);
  d.shuffle(v2);
  CHECK(v1 == v2);
  for (int i = 0; i < 1000; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("distinct streams are decorrelated") {
  num::RngStream a(42, 0);
  num::RngStream b(42, 1);
  const int n = 10000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    double ua = a.uniform(), ub = b.uniform();
    sa += ua;
    sb += ub;
    sab += ua * ub;
    saa += ua * ua;
    sbb += ub * ub;
  }
  double ma = sa / n, mb = sb / n;
  double cov = sab / n - ma * mb;
  double corr = cov / std::sqrt((saa / n - ma * ma) * (sbb / n - mb * mb));
  CHECK(std::abs(corr) < 0.05);
  // uniform mean within 3 standard errors of 0.5 (se = 1/sqrt(12 n))
  CHECK(std::abs(ma - 0.5) < 3.0 / std::sqrt(12.0 * n));
  CHECK(std::abs(mb - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("rng children and bounded draws") {
  num::RngStream root(5, 0);
  num::RngStream c1 = root.child(1);
  num::RngStream c2 = root.child(2);
  num::RngStream c1_again = root.child(1);
  CHECK(c1.next_u64() != c2.next_u64());
  num::RngStream c1b = root.child(1);
  CHECK(c1_again.next_u64() == c1b.next_u64());

  num::RngStream r(11, 3);
  for (int i = 0; i < 1000; ++i) {
    uint64_t v = r.below(7);
    CHECK(v < 7);
  }
  CHECK_THROWS_AS(r.below(0), DomainError);

  // normal moments sane on 1e4 draws
  num::RngStream g(13, 0);
  double s = 0, ss = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double z = g.normal();
    s += z;
    ss += z * z;
  }
  CHECK(std::abs(s / n) < 3.0 / std::sqrt(double(n)));
  CHECK(ss / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("format_g17 round-trips doubles exactly") {
  num::RngStream rng(17, 4);
  for (int i = 0; i < 1000; ++i) {
    double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-8.0, 8.0));
    std::string s = num::format_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}
