#pragma once

// Independent reference computations for the test suite. Everything here is
// deliberately naive: direct enumeration, textbook DFS, explicit inner
// products. The library must agree with these, never the other way around.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "hierstab/hierstab.hpp"

namespace orc {

using namespace hierstab;

// E[f * chi_S] by direct enumeration over the x marginal.
inline double direct_coefficient(const FunctionTable& f, std::uint64_t mask) {
    const ProductSpace& space = f.space();
    KahanSum acc;
    for_each_x_atom(space, [&](std::span<const std::size_t> idx, double p) {
        double chi = 1.0;
        for (std::size_t i = 0; i < space.n(); ++i) {
            if ((mask >> i) & 1u) chi *= space.pair(i).x_marginal().standardized(idx[i]);
        }
        acc.add(p * chi * f.at(idx));
    });
    return acc.value();
}

// Corr(f(X), f(Y)) by direct enumeration over the joint law. Requires the
// y marginals to share the x supports (true for every resampling coupling).
inline double direct_stability(const FunctionTable& f) {
    const ProductSpace& space = f.space();
    KahanSum exy, ex, ey, exx, eyy;
    for_each_joint_atom(space, [&](std::span<const std::size_t> xi,
                                   std::span<const std::size_t> yi, double p) {
        const double fx = f.at(xi);
        const double fy = f.at(yi);
        exy.add(p * fx * fy);
        ex.add(p * fx);
        ey.add(p * fy);
        exx.add(p * fx * fx);
        eyy.add(p * fy * fy);
    });
    const double vx = exx.value() - ex.value() * ex.value();
    const double vy = eyy.value() - ey.value() * ey.value();
    if (vx <= kVarianceFloor || vy <= kVarianceFloor) return 0.0;
    return (exy.value() - ex.value() * ey.value()) / std::sqrt(vx * vy);
}

// Reconstruct f at every atom from expansion coefficients; worst residual.
inline double reconstruction_residual(const FunctionTable& f, const FourierExpansion& F) {
    const ProductSpace& space = f.space();
    double worst = 0.0;
    for_each_x_atom(space, [&](std::span<const std::size_t> idx, double) {
        double value = 0.0;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << space.n()); ++mask) {
            double chi = 1.0;
            for (std::size_t i = 0; i < space.n(); ++i) {
                if ((mask >> i) & 1u) chi *= space.pair(i).x_marginal().standardized(idx[i]);
            }
            value += F.coefficient(mask) * chi;
        }
        worst = std::max(worst, std::abs(value - f.at(idx)));
    });
    return worst;
}

// Left-to-right crossing by plain DFS; adjacency matches the grid: east,
// south, and the south-west diagonal (plus reverses).
inline bool dfs_crossing(std::size_t side, std::uint64_t open_bits) {
    const auto open = [&](std::size_t r, std::size_t c) {
        return ((open_bits >> (r * side + c)) & 1u) != 0;
    };
    std::vector<char> seen(side * side, 0);
    std::vector<std::size_t> stack;
    for (std::size_t r = 0; r < side; ++r) {
        if (open(r, 0)) {
            seen[r * side] = 1;
            stack.push_back(r * side);
        }
    }
    // Every reached site is popped exactly once, so arriving anywhere in the
    // right column decides the crossing; seeds that already sit there count.
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        const std::size_t r = s / side, c = s % side;
        if (c + 1 == side) return true;
        const long dr[6] = {0, 0, 1, -1, 1, -1};
        const long dc[6] = {1, -1, 0, 0, -1, 1};
        for (int k = 0; k < 6; ++k) {
            const long nr = static_cast<long>(r) + dr[k];
            const long nc = static_cast<long>(c) + dc[k];
            if (nr < 0 || nc < 0 || nr >= static_cast<long>(side) || nc >= static_cast<long>(side))
                continue;
            const std::size_t t = static_cast<std::size_t>(nr) * side + static_cast<std::size_t>(nc);
            if (!seen[t] && open(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc))) {
                seen[t] = 1;
                stack.push_back(t);
            }
        }
    }
    return false;
}

// --- deterministic random instances -----------------------------------------

inline FiniteDistribution random_distribution(RngStream& rng, std::size_t max_points = 3) {
    const std::size_t k = 2 + static_cast<std::size_t>(rng.next_u64() % (max_points - 1));
    std::vector<double> support(k), probs(k);
    double prev = -2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        prev += 0.25 + rng.next_unit();
        support[i] = prev;
        probs[i] = 0.1 + rng.next_unit();
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    // Renormalize the tail so the sum is exactly representable near 1.
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) acc += probs[i];
    probs[k - 1] = 1.0 - acc;
    return FiniteDistribution(std::move(support), std::move(probs));
}

inline std::shared_ptr<const ProductSpace> random_resampling_space(RngStream& rng, std::size_t n,
                                                                   double rho,
                                                                   std::size_t max_points = 3) {
    std::vector<CorrelatedPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pairs.push_back(make_resampling_coupling(random_distribution(rng, max_points), rho));
    return std::make_shared<const ProductSpace>(ProductSpace(std::move(pairs)));
}

// Strictly positive random joint; marginals fall out of the row/column sums.
inline CorrelatedPair random_explicit_pair(RngStream& rng, std::size_t max_points = 3) {
    const std::size_t a = 2 + static_cast<std::size_t>(rng.next_u64() % (max_points - 1));
    const std::size_t b = 2 + static_cast<std::size_t>(rng.next_u64() % (max_points - 1));
    std::vector<double> xs(a), ys(b);
    double v = -1.5;
    for (auto& x : xs) {
        v += 0.3 + rng.next_unit();
        x = v;
    }
    v = -1.5;
    for (auto& y : ys) {
        v += 0.3 + rng.next_unit();
        y = v;
    }
    std::vector<std::vector<double>> joint(a, std::vector<double>(b));
    double total = 0.0;
    for (auto& row : joint)
        for (auto& cell : row) {
            cell = 0.05 + rng.next_unit();
            total += cell;
        }
    double acc = 0.0;
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j) {
            if (i + 1 == a && j + 1 == b) {
                joint[i][j] = 1.0 - acc;
            } else {
                joint[i][j] /= total;
                acc += joint[i][j];
            }
        }
    return pair_from_joint(xs, ys, joint);
}

// Multilinear by construction: pick coefficients, then synthesize the table
// as sum_S c_S * chi_S, so the expansion has an exact target to hit.
struct SynthesizedMultilinear {
    FunctionTable table;
    std::vector<double> coefficients;  // indexed by subset mask
};

inline SynthesizedMultilinear random_multilinear(RngStream& rng,
                                                 std::shared_ptr<const ProductSpace> space) {
    const std::size_t n = space->n();
    std::vector<double> coef(std::size_t{1} << n);
    for (double& c : coef) c = 2.0 * rng.next_unit() - 1.0;
    std::vector<double> values(space->x_state_count(), 0.0);
    for_each_x_atom(*space, [&](std::span<const std::size_t> idx, double) {
        std::uint64_t flat = 0;
        std::uint64_t stride = 1;
        for (std::size_t i = 0; i < n; ++i) {
            flat += idx[i] * stride;
            stride *= space->pair(i).x_marginal().size();
        }
        double v = 0.0;
        for (std::uint64_t mask = 0; mask < coef.size(); ++mask) {
            double chi = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if ((mask >> i) & 1u) chi *= space->pair(i).x_marginal().standardized(idx[i]);
            }
            v += coef[mask] * chi;
        }
        values[flat] = v;
    });
    return SynthesizedMultilinear{FunctionTable(std::move(space), std::move(values)),
                                  std::move(coef)};
}

// Conditional expectation E[g | X_T = *] of a full table; returns the worst
// absolute bucket mean, used for the vanishing property of decompositions.
inline double worst_conditional_mean(const ProductSpace& space, std::span<const double> g,
                                     std::uint64_t t_mask) {
    std::map<std::vector<std::size_t>, std::pair<double, double>> buckets;
    std::uint64_t flat = 0;
    for_each_x_atom(space, [&](std::span<const std::size_t> idx, double p) {
        std::vector<std::size_t> key;
        for (std::size_t i = 0; i < space.n(); ++i) {
            if ((t_mask >> i) & 1u) key.push_back(idx[i]);
        }
        auto& [mass, sum] = buckets[key];
        mass += p;
        sum += p * g[flat];
        ++flat;
    });
    double worst = 0.0;
    for (const auto& [key, ms] : buckets) {
        if (ms.first > 0.0) worst = std::max(worst, std::abs(ms.second / ms.first));
    }
    return worst;
}

}  // namespace orc
