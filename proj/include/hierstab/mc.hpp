#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace hierstab {

// Point estimate with a CLT 95% interval. Deterministic for fixed
// (seed, samples): worker count never changes the result.
struct McEstimate {
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double std_error = 0.0;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
    bool degenerate = false;
};

inline constexpr double kNormal975 = 1.959963984540054;

// Samples are cut into fixed blocks; each worker fills whole blocks and the
// caller reduces them in block order, so the float result is identical for
// any worker count.
inline constexpr std::uint64_t kMcBlock = 4096;

// body(block_index, first_sample, last_sample, out[block_index]) must write
// only its own slot.
template <class Acc, class Body>
std::vector<Acc> run_blocks(std::uint64_t samples, int workers, Body&& body) {
    const std::uint64_t blocks = (samples + kMcBlock - 1) / kMcBlock;
    std::vector<Acc> out(blocks);
    if (workers <= 1 || blocks <= 1) {
        for (std::uint64_t b = 0; b < blocks; ++b) {
            const std::uint64_t lo = b * kMcBlock;
            const std::uint64_t hi = std::min(samples, lo + kMcBlock);
            body(b, lo, hi, out[b]);
        }
        return out;
    }
    const int w = static_cast<int>(std::min<std::uint64_t>(blocks, static_cast<std::uint64_t>(workers)));
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&, t] {
            for (std::uint64_t b = t; b < blocks; b += w) {
                const std::uint64_t lo = b * kMcBlock;
                const std::uint64_t hi = std::min(samples, lo + kMcBlock);
                body(b, lo, hi, out[b]);
            }
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

}  // namespace hierstab
