#include "hlte/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "hlte/errors.hpp"

namespace hlte::num {

double sigmoid(double z) {
  if (!std::isfinite(z)) throw DomainError("sigmoid: non-finite input");
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("logit: p must lie in (0,1)");
  return std::log(p) - std::log1p(-p);
}

double trim(double u, double eta) {
  if (!(eta > 0.0 && eta < 0.5)) throw ConfigError("trim: eta must lie in (0, 0.5)");
  return std::fmax(eta, std::fmin(u, 1.0 - eta));
}

SummaryStat summarize(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("summarize: empty input");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("summarize: non-finite element");
    sum += v;
  }
  SummaryStat st;
  st.n = values.size();
  st.mean = sum / static_cast<double>(st.n);
  if (st.n == 1) {
    st.degenerate = true;
    return st;
  }
  double ss = 0.0;
  for (double v : values) {
    double d = v - st.mean;
    ss += d * d;
  }
  st.variance = ss / static_cast<double>(st.n - 1);
  return st;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

uint64_t fnv1a(const void* bytes, std::size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a_u64(uint64_t v, uint64_t h) { return fnv1a(&v, sizeof v, h); }

uint64_t fnv1a_double(double v, uint64_t h) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return fnv1a_u64(bits, h);
}

}  // namespace hlte::num
