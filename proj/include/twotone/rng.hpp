#pragma once

// Counter-based RNG: Philox4x64-10 with a 256-bit counter that is incremented
// before each block, matching the numpy BitGenerator stream for the same key.
// Streams are split by key, so per-trajectory generators are independent and
// reproducible regardless of scheduling.

#include <cmath>
#include <cstdint>

#include "twotone/constants.hpp"

namespace twotone {

class PhiloxEngine {
  public:
    explicit PhiloxEngine(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(seed), key1_(stream) {}

    std::uint64_t next_u64() {
        if (index_ == 4) {
            increment_counter();
            generate_block();
            index_ = 0;
        }
        return block_[index_++];
    }

    // uniform in [0, 1), 53-bit mantissa
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller on consecutive uniform pairs
    double next_gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = two_pi * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

  private:
    static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
    static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
    static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    void increment_counter() {
        for (int i = 0; i < 4; ++i)
            if (++ctr_[i] != 0) break;  // carry
    }

    void generate_block() {
        std::uint64_t x0 = ctr_[0], x1 = ctr_[1], x2 = ctr_[2], x3 = ctr_[3];
        std::uint64_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(kMul0, x0, hi0, lo0);
            mulhilo(kMul1, x2, hi1, lo1);
            const std::uint64_t y0 = hi1 ^ x1 ^ k0;
            const std::uint64_t y1 = lo1;
            const std::uint64_t y2 = hi0 ^ x3 ^ k1;
            const std::uint64_t y3 = lo0;
            x0 = y0; x1 = y1; x2 = y2; x3 = y3;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        block_[0] = x0; block_[1] = x1; block_[2] = x2; block_[3] = x3;
    }

    std::uint64_t key0_, key1_;
    std::uint64_t ctr_[4] = {0, 0, 0, 0};
    std::uint64_t block_[4] = {0, 0, 0, 0};
    int index_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace twotone
