#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace hierstab {

// Philox 4x32-10 counter-based generator. Every 128-bit output block is a
// pure function of (key, counter), so a "stream" is just a counter prefix
// and any partition of the index range across workers reproduces the
// serial sequence bit for bit.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    // counter layout: words (ctr_lo, ctr_lo>>32, ctr_hi, ctr_hi>>32)
    static Block generate(std::uint64_t key, std::uint64_t ctr_hi, std::uint64_t ctr_lo) noexcept {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        Block x{static_cast<std::uint32_t>(ctr_lo),
                static_cast<std::uint32_t>(ctr_lo >> 32),
                static_cast<std::uint32_t>(ctr_hi),
                static_cast<std::uint32_t>(ctr_hi >> 32)};
        for (int round = 0; round < 10; ++round) {
            x = round_fn(x, k0, k1);
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return x;
    }

private:
    static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) noexcept {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) >> 32);
    }

    static Block round_fn(const Block& x, std::uint32_t k0, std::uint32_t k1) noexcept {
        constexpr std::uint32_t m0 = 0xD2511F53u;
        constexpr std::uint32_t m1 = 0xCD9E8D57u;
        const std::uint32_t hi0 = mulhi(m0, x[0]);
        const std::uint32_t lo0 = m0 * x[0];
        const std::uint32_t hi1 = mulhi(m1, x[2]);
        const std::uint32_t lo1 = m1 * x[2];
        return {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
    }
};

// Fixed stream-id prefixes. Keeping purposes in disjoint counter ranges
// means no draw is ever shared between estimators.
namespace stream_salt {
inline constexpr std::uint64_t product_sampler = std::uint64_t{1} << 56;
inline constexpr std::uint64_t stability_mc = std::uint64_t{2} << 56;
inline constexpr std::uint64_t percolation = std::uint64_t{3} << 56;
inline constexpr std::uint64_t induced_mc = std::uint64_t{4} << 56;
inline constexpr std::uint64_t demo = std::uint64_t{5} << 56;
inline constexpr std::uint64_t test_suite = std::uint64_t{9} << 56;
}  // namespace stream_salt

// Sequential view of one stream. Word position acts as the Philox counter,
// so equal (seed, stream) always replays the same values.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : seed_(seed), stream_(stream) {}

    std::uint32_t next_u32() noexcept {
        if (word_pos_ == 4) {
            block_ = Philox4x32::generate(seed_, stream_, block_index_++);
            word_pos_ = 0;
        }
        return block_[word_pos_++];
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform on [0,1) with 53 random bits.
    double next_unit() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (uses two uniforms, discards the twin).
    double next_gaussian() noexcept {
        const double u = 1.0 - next_unit();  // (0,1]
        const double v = next_unit();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925287 * v);
    }

    // Value at an absolute position of a stream, without stepping through it.
    static double unit_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
        const auto b = Philox4x32::generate(seed, stream, index);
        const std::uint64_t u = static_cast<std::uint64_t>(b[0]) | (static_cast<std::uint64_t>(b[1]) << 32);
        return static_cast<double>(u >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_index_ = 0;
    Philox4x32::Block block_{};
    int word_pos_ = 4;
};

// p as a binary64 fixed-point fraction of 2^64. Exact for p in [0,1]
// because a double's 53 mantissa bits always fit in the 64 digit slots.
inline std::uint64_t dyadic_fraction(double p) noexcept {
    if (!(p > 0.0)) return 0;
    if (p >= 1.0) return ~std::uint64_t{0};
    return static_cast<std::uint64_t>(std::ldexp(p, 64));
}

// 64 independent Bernoulli(p) bits per call. Digit-by-digit synthesis:
// lane i compares its uniform bit stream against the binary expansion of p
// and freezes as soon as the comparison is decided, so the expected number
// of words consumed is about 2 regardless of p.
inline std::uint64_t bernoulli_mask(std::uint64_t p_fixed64, RngStream& rng) noexcept {
    // Saturated fixed-point endpoints mean "always" / "never"; keep them exact.
    if (p_fixed64 == ~std::uint64_t{0}) return ~std::uint64_t{0};
    if (p_fixed64 == 0) return 0;
    std::uint64_t undecided = ~std::uint64_t{0};
    std::uint64_t result = 0;
    for (int j = 63; j >= 0 && undecided != 0; --j) {
        const std::uint64_t w = rng.next_u64();
        if ((p_fixed64 >> j) & 1u) {
            result |= undecided & ~w;
            undecided &= w;
        } else {
            undecided &= ~w;
        }
    }
    return result;
}

// Compensated accumulator (Neumaier variant); keeps long expectation sums
// well below the 1e-9 agreement tolerances used throughout.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) noexcept {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }

    double value() const noexcept { return sum + carry; }
};

}  // namespace hierstab
