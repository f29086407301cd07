#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A stream is
// addressed by (seed, stream id), so trajectory i of an ensemble draws from
// stream (master_seed, i) and results do not depend on scheduling order.

#include <cstdint>

namespace sympacool {

class PhiloxRng {
 public:
  PhiloxRng(std::uint64_t seed, std::uint64_t stream)
      : key0_(std::uint32_t(seed)), key1_(std::uint32_t(seed >> 32)),
        ctr2_(std::uint32_t(stream)), ctr3_(std::uint32_t(stream >> 32)) {}

  std::uint32_t next_u32() {
    if (have_ == 0) {
      block();
      have_ = 4;
    }
    return out_[4 - have_--];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    return (std::uint64_t(next_u32()) << 32) | lo;
  }

  // strictly inside (0, 1); suitable for jump thresholds
  double uniform() {
    return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
    return std::uint32_t((std::uint64_t(a) * b) >> 32);
  }

  void block() {
    std::uint32_t c0 = std::uint32_t(block_index_);
    std::uint32_t c1 = std::uint32_t(block_index_ >> 32);
    std::uint32_t c2 = ctr2_, c3 = ctr3_;
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint32_t lo0 = 0xD2511F53u * c0;
      const std::uint32_t hi0 = mulhi(0xD2511F53u, c0);
      const std::uint32_t lo1 = 0xCD9E8D57u * c2;
      const std::uint32_t hi1 = mulhi(0xCD9E8D57u, c2);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = c0; out_[1] = c1; out_[2] = c2; out_[3] = c3;
    ++block_index_;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t ctr2_, ctr3_;
  std::uint64_t block_index_ = 0;
  std::uint32_t out_[4] = {};
  int have_ = 0;
};

}  // namespace sympacool
