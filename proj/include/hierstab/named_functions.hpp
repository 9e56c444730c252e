#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hierstab/fourier.hpp"
#include "hierstab/product_space.hpp"

namespace hierstab {

// n fair {-1,+1} coordinates, each pair rho-resampled.
inline std::shared_ptr<const ProductSpace> uniform_cube_space(std::size_t n, double rho = 0.0) {
    return make_resampling_space(FiniteDistribution::uniform_pm1(), n, rho);
}

namespace detail {

// bit i of flat = 1 means x_i = +1 (index 1 of the {-1,+1} support)
template <class Fn>
FunctionTable cube_table(std::size_t n, double rho, Fn&& value_of_mask) {
    if (n == 0 || n > kDenseCoefficientLimit) {
        throw validation_error("named function: n must be in [1, 26]");
    }
    auto space = uniform_cube_space(n, rho);
    std::vector<double> vals(std::uint64_t{1} << n);
    for (std::uint64_t m = 0; m < vals.size(); ++m) vals[m] = value_of_mask(m);
    return FunctionTable(std::move(space), std::move(vals));
}

}  // namespace detail

// Majority of three fair bits.
inline FunctionTable maj3_table(double rho = 0.0) {
    return detail::cube_table(3, rho, [](std::uint64_t m) {
        return std::popcount(m) >= 2 ? 1.0 : -1.0;
    });
}

// Product of all n coordinates.
inline FunctionTable parity_table(std::size_t n, double rho = 0.0) {
    return detail::cube_table(n, rho, [n](std::uint64_t m) {
        return (std::popcount(m) & 1u) == (n & 1u) ? 1.0 : -1.0;
    });
}

// First coordinate.
inline FunctionTable dictator_table(std::size_t n, double rho = 0.0) {
    return detail::cube_table(n, rho, [](std::uint64_t m) { return (m & 1u) ? 1.0 : -1.0; });
}

// OR of ANDs over consecutive blocks. Block width is the smallest divisor of
// n at least floor(log2 n); +1 plays "true".
inline FunctionTable tribes_table(std::size_t n, double rho = 0.0) {
    std::size_t target = 0;
    while ((std::size_t{2} << target) <= n) ++target;  // target = floor(log2 n)
    std::size_t width = n;
    for (std::size_t w = std::max<std::size_t>(1, target); w <= n; ++w) {
        if (n % w == 0) {
            width = w;
            break;
        }
    }
    return detail::cube_table(n, rho, [n, width](std::uint64_t m) {
        for (std::size_t start = 0; start < n; start += width) {
            const std::uint64_t block = (m >> start) & ((std::uint64_t{1} << width) - 1);
            if (block == (std::uint64_t{1} << width) - 1) return 1.0;  // one all-true tribe
        }
        return -1.0;
    });
}

inline FunctionTable named_function(const std::string& name, std::size_t n, double rho = 0.0) {
    if (name == "maj3") return maj3_table(rho);
    if (name == "parity") return parity_table(n, rho);
    if (name == "dictator") return dictator_table(n, rho);
    if (name == "tribes") return tribes_table(n, rho);
    throw validation_error("unknown named function: " + name);
}

}  // namespace hierstab
