#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/mc.hpp"
#include "hierstab/named_functions.hpp"
#include "hierstab/rng.hpp"

namespace hierstab {

// n x n rhombus of the triangular site lattice: square grid plus the
// (r+1, c-1) diagonal, so interior sites have six neighbors. A crossing
// joins the left column (c = 0) to the right column (c = n-1) through
// open sites.
class TriangularGrid {
public:
    explicit TriangularGrid(std::size_t side) : side_(side) {
        if (side == 0) throw validation_error("grid side must be positive");
        if (side > 1024) throw validation_error("grid side above 1024 is not supported");
    }

    std::size_t side() const noexcept { return side_; }
    std::size_t sites() const noexcept { return side_ * side_; }
    std::size_t words() const noexcept { return (sites() + 63) / 64; }
    std::size_t site(std::size_t r, std::size_t c) const noexcept { return r * side_ + c; }

private:
    std::size_t side_;
};

// Disjoint sets with path compression and union by rank.
class UnionFind {
public:
    void reset(std::size_t count) {
        parent_.resize(count);
        std::iota(parent_.begin(), parent_.end(), 0u);
        rank_.assign(count, 0);
    }

    std::uint32_t find(std::uint32_t x) noexcept {
        std::uint32_t root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            const std::uint32_t next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    void unite(std::uint32_t a, std::uint32_t b) noexcept {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint8_t> rank_;
};

namespace detail {

inline bool open_at(const std::uint64_t* words, std::size_t s) noexcept {
    return (words[s >> 6] >> (s & 63u)) & 1u;
}

}  // namespace detail

// +1 when an open left-right crossing exists, -1 otherwise. Links each open
// site to its east, south and southwest open neighbors (every lattice edge
// is visited exactly once) plus two virtual boundary nodes.
inline int crossing_sign(const TriangularGrid& grid, const std::uint64_t* open_words,
                         UnionFind& uf) {
    const std::size_t n = grid.side();
    const std::uint32_t left = static_cast<std::uint32_t>(grid.sites());
    const std::uint32_t right = left + 1;
    uf.reset(grid.sites() + 2);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t s = grid.site(r, c);
            if (!detail::open_at(open_words, s)) continue;
            const std::uint32_t s32 = static_cast<std::uint32_t>(s);
            if (c == 0) uf.unite(s32, left);
            if (c == n - 1) uf.unite(s32, right);
            if (c + 1 < n && detail::open_at(open_words, s + 1)) {
                uf.unite(s32, static_cast<std::uint32_t>(s + 1));
            }
            if (r + 1 < n) {
                if (detail::open_at(open_words, s + n)) {
                    uf.unite(s32, static_cast<std::uint32_t>(s + n));
                }
                if (c > 0 && detail::open_at(open_words, s + n - 1)) {
                    uf.unite(s32, static_cast<std::uint32_t>(s + n - 1));
                }
            }
        }
    }
    return uf.find(left) == uf.find(right) ? 1 : -1;
}

// P(open crossing) at site density p, with a CLT 95% interval. Each sample
// owns one Philox stream, so estimates are worker-count independent.
inline McEstimate crossing_probability(const TriangularGrid& grid, double p, std::uint64_t seed,
                                       std::uint64_t samples, int workers = 1) {
    if (!(p >= 0.0 && p <= 1.0)) throw validation_error("crossing probability: p must lie in [0,1]");
    if (samples == 0) throw validation_error("crossing probability: need at least one sample");
    const std::size_t W = grid.words();
    const std::uint64_t pfix = dyadic_fraction(p);
    const bool fair = p == 0.5;
    struct Acc {
        std::int64_t hits = 0;
    };
    const auto blocks = run_blocks<Acc>(
        samples, workers, [&](std::uint64_t, std::uint64_t lo, std::uint64_t hi, Acc& acc) {
            UnionFind uf;
            std::vector<std::uint64_t> x(W);
            for (std::uint64_t k = lo; k < hi; ++k) {
                RngStream rng(seed, stream_salt::percolation + k);
                for (std::size_t w = 0; w < W; ++w) {
                    x[w] = fair ? rng.next_u64() : bernoulli_mask(pfix, rng);
                }
                if (crossing_sign(grid, x.data(), uf) > 0) ++acc.hits;
            }
        });
    std::int64_t hits = 0;
    for (const auto& b : blocks) hits += b.hits;
    McEstimate est;
    est.samples = samples;
    est.seed = seed;
    est.estimate = static_cast<double>(hits) / static_cast<double>(samples);
    est.std_error = std::sqrt(std::max(0.0, est.estimate * (1.0 - est.estimate) /
                                                static_cast<double>(samples)));
    est.ci_low = est.estimate - kNormal975 * est.std_error;
    est.ci_high = est.estimate + kNormal975 * est.std_error;
    return est;
}

// E[f(X) f(Y)] for the +-1 crossing sign under rho-resampling of fair sites:
// each site keeps its X state with probability rho, else redraws fair.
inline McEstimate crossing_stability(const TriangularGrid& grid, double rho, std::uint64_t seed,
                                     std::uint64_t samples, int workers = 1) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw validation_error("crossing stability: rho must lie in [0,1]");
    if (samples == 0) throw validation_error("crossing stability: need at least one sample");
    const std::size_t W = grid.words();
    const std::uint64_t rfix = dyadic_fraction(rho);
    struct Acc {
        std::int64_t agree = 0;  // sum of f(X) f(Y) over the block
    };
    const auto blocks = run_blocks<Acc>(
        samples, workers, [&](std::uint64_t, std::uint64_t lo, std::uint64_t hi, Acc& acc) {
            UnionFind uf;
            std::vector<std::uint64_t> x(W), y(W);
            for (std::uint64_t k = lo; k < hi; ++k) {
                RngStream rng(seed, stream_salt::percolation + k);
                for (std::size_t w = 0; w < W; ++w) x[w] = rng.next_u64();
                for (std::size_t w = 0; w < W; ++w) {
                    const std::uint64_t keep = bernoulli_mask(rfix, rng);
                    const std::uint64_t fresh = rng.next_u64();
                    y[w] = (x[w] & keep) | (fresh & ~keep);
                }
                const int fx = crossing_sign(grid, x.data(), uf);
                const int fy = crossing_sign(grid, y.data(), uf);
                acc.agree += fx * fy;
            }
        });
    std::int64_t agree = 0;
    for (const auto& b : blocks) agree += b.agree;
    McEstimate est;
    est.samples = samples;
    est.seed = seed;
    est.estimate = static_cast<double>(agree) / static_cast<double>(samples);
    est.std_error = std::sqrt(std::max(0.0, (1.0 - est.estimate * est.estimate) /
                                                static_cast<double>(samples)));
    est.ci_low = est.estimate - kNormal975 * est.std_error;
    est.ci_high = est.estimate + kNormal975 * est.std_error;
    return est;
}

// Full +-1 crossing table over the 2^sites fair configurations.
inline FunctionTable crossing_table(const TriangularGrid& grid,
                                    std::uint64_t cap = enumeration_cap()) {
    const std::size_t N = grid.sites();
    if (N > 22) {
        throw capacity_error("crossing table: " + std::to_string(N) + " sites need 2^" +
                             std::to_string(N) + " entries");
    }
    const std::uint64_t count = std::uint64_t{1} << N;
    if (count > cap) {
        throw capacity_error("crossing table: 2^" + std::to_string(N) + " exceeds cap");
    }
    UnionFind uf;
    std::vector<double> vals(count);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        vals[mask] = static_cast<double>(crossing_sign(grid, &mask, uf));
    }
    return FunctionTable(uniform_cube_space(N), std::move(vals));
}

struct DegreeProfile {
    std::size_t side = 0;
    std::size_t sites = 0;
    double mean = 0.0;
    double variance = 0.0;
    double total_mass = 0.0;                       // sum of all squared coefficients
    std::vector<double> mass_by_degree;            // index d = mass at degree d
    std::vector<double> cumulative_mass;           // index d = sum over 1..d
    std::vector<double> sqrt_cumulative_mass;      // index d = sqrt of the above
};

// Exact spectral profile of the crossing sign on a small grid.
inline DegreeProfile exact_crossing_spectrum(const TriangularGrid& grid,
                                             std::uint64_t cap = enumeration_cap()) {
    const FunctionTable table = crossing_table(grid, cap);
    const FourierExpansion F = expand(table);
    DegreeProfile prof;
    prof.side = grid.side();
    prof.sites = grid.sites();
    prof.mean = F.mean();
    prof.variance = F.variance();
    prof.total_mass = F.total_mass();
    prof.mass_by_degree = F.degree_mass();
    prof.cumulative_mass.assign(prof.mass_by_degree.size(), 0.0);
    prof.sqrt_cumulative_mass.assign(prof.mass_by_degree.size(), 0.0);
    double run = 0.0;
    for (std::size_t d = 1; d < prof.mass_by_degree.size(); ++d) {
        run += prof.mass_by_degree[d];
        prof.cumulative_mass[d] = run;
        prof.sqrt_cumulative_mass[d] = std::sqrt(run);
    }
    return prof;
}

}  // namespace hierstab
