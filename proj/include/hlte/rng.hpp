#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hlte/errors.hpp"

namespace hlte::num {

// Counter-based splittable random stream. Draw i is a strong 64-bit hash of
// (seed, stream_id, i), so equal (seed, stream_id) replays bit-identically no
// matter how work is scheduled across threads, and distinct stream ids give
// practically independent sequences. Instances are cheap value types; each
// task owns its own stream and derives children instead of sharing state.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream_id)
      : seed_(seed), stream_(stream_id) {
    key_ = mix(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ stream_id);
    if (key_ == 0) key_ = 0x6a09e667f3bcc909ull;  // dodge the weak all-zero key
  }

  uint64_t seed() const noexcept { return seed_; }
  uint64_t stream_id() const noexcept { return stream_; }

  // Independent sub-stream; child ids may collide across different parents
  // without correlating because the parent stream id is folded in.
  RngStream child(uint64_t child_id) const {
    return RngStream(seed_, mix(stream_ ^ mix(child_id + 0x100000001b3ull)));
  }

  uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // uniform on [0,1) with 53 random mantissa bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; draws are consumed in pairs and the spare
  // is cached, which is deterministic because streams are exclusively owned
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // unbiased integer on [0, n) by rejection
  uint64_t below(uint64_t n) {
    if (n == 0) throw DomainError("RngStream::below: n must be positive");
    uint64_t excess = (UINT64_MAX % n + 1) % n;
    uint64_t bound = UINT64_MAX - excess;
    uint64_t v = next_u64();
    while (v > bound) v = next_u64();
    return v % n;
  }

  // Fisher-Yates
  template <class T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static uint64_t mix(uint64_t z) {  // splitmix64 finalizer
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_;
  uint64_t stream_;
  uint64_t key_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hlte::num
