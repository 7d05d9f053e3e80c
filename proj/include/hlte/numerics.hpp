#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hlte::num {

// 1/(1+exp(-z)), branch on sign so exp never overflows; throws DomainError on
// non-finite input
double sigmoid(double z);

// log(p/(1-p)) for p in (0,1)
double logit(double p);

// clamp u into [eta, 1-eta]; eta must lie in (0, 0.5)
double trim(double u, double eta);

struct SummaryStat {
  double mean = 0.0;
  double variance = 0.0;  // unbiased, divisor n-1
  std::size_t n = 0;
  bool degenerate = false;  // n == 1, variance reported as 0
};

SummaryStat summarize(const std::vector<double>& values);

// Decimal text with 17 significant digits; round-trips any finite double
// bit-exactly through strtod.
std::string format_g17(double v);

// FNV-1a over raw bytes, used for config hashes and data fingerprints
uint64_t fnv1a(const void* bytes, std::size_t len, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a_u64(uint64_t v, uint64_t h);
uint64_t fnv1a_double(double v, uint64_t h);

}  // namespace hlte::num
