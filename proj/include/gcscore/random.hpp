#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gcscore/dataset.hpp"
#include "gcscore/errors.hpp"

namespace gcscore {

// Philox4x32-10 counter-based generator. The key is the user seed; the upper
// counter words select an independent stream (one per replication), so any
// replication can be regenerated without replaying the others.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  result_type operator()() {
    if (index_ == 4) {
      buffer_ = block(Counter{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                              static_cast<std::uint32_t>(stream_),
                              static_cast<std::uint32_t>(stream_ >> 32)},
                      key_);
      ++block_;
      index_ = 0;
    }
    return buffer_[index_++];
  }

  // Uniform on (0,1) from 53 random bits; never returns 0 or 1.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5;
    const std::uint64_t lo = (*this)() >> 6;
    return (static_cast<double>(hi * 67108864ull + lo) + 0.5) * (1.0 / 9007199254740992.0);
  }

  static Counter block(Counter c, Key k) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    return c;
  }

 private:
  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Counter buffer_{};
  int index_ = 4;
};

// Marsaglia polar method; deterministic given the generator state.
class NormalSampler {
 public:
  double operator()(Philox4x32& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * rng.uniform() - 1.0;
      v = 2.0 * rng.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Uniform integer in [0, bound) by rejection, free of modulo bias.
inline std::uint32_t uniform_below(Philox4x32& rng, std::uint32_t bound) {
  const std::uint32_t limit = std::numeric_limits<std::uint32_t>::max() -
                              std::numeric_limits<std::uint32_t>::max() % bound;
  std::uint32_t x;
  do x = rng();
  while (x >= limit);
  return x % bound;
}

// Fisher-Yates, spelled out so results do not depend on the standard library.
template <typename T>
void shuffle(std::vector<T>& v, Philox4x32& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[uniform_below(rng, static_cast<std::uint32_t>(i))]);
}

inline void check_allocation(const std::array<double, 2>& allocation) {
  if (!(allocation[0] > 0.0 && allocation[0] < 1.0 && allocation[1] > 0.0 &&
        allocation[1] < 1.0) ||
      std::abs(allocation[0] + allocation[1] - 1.0) > 1e-12)
    throw ConfigError("allocation must be two probabilities in (0,1) summing to 1");
}

// Exactly floor(n * pi_1) subjects in arm 1 (remainder to arm 2), in uniformly
// random positions.
inline std::vector<Arm> randomize_complete(std::size_t n, const std::array<double, 2>& allocation,
                                           Philox4x32& rng) {
  check_allocation(allocation);
  const auto n1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * allocation[0] + 1e-9));
  std::vector<Arm> arms(n, Arm::kTwo);
  std::fill_n(arms.begin(), n1, Arm::kOne);
  shuffle(arms, rng);
  return arms;
}

// Permuted blocks within each stratum, in order of subject entry. The last
// block of a stratum is a prefix of a full random block.
template <typename Label>
std::vector<Arm> randomize_stratified_block(const std::vector<Label>& strata, int block_size,
                                            const std::array<double, 2>& allocation,
                                            Philox4x32& rng) {
  check_allocation(allocation);
  if (block_size < 2) throw ConfigError("block size must be at least 2");
  const double k1_real = block_size * allocation[0];
  const int k1 = static_cast<int>(std::lround(k1_real));
  if (std::abs(k1_real - k1) > 1e-9 || k1 == 0 || k1 == block_size)
    throw ConfigError("block size " + std::to_string(block_size) +
                      " cannot hold the allocation exactly");

  struct State {
    std::vector<Arm> block;
    std::size_t next = 0;
  };
  std::map<Label, State> states;
  std::vector<Arm> arms(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i) {
    State& st = states[strata[i]];
    if (st.next == st.block.size()) {
      st.block.assign(static_cast<std::size_t>(block_size), Arm::kTwo);
      std::fill_n(st.block.begin(), k1, Arm::kOne);
      shuffle(st.block, rng);
      st.next = 0;
    }
    arms[i] = st.block[st.next++];
  }
  return arms;
}

}  // namespace gcscore
