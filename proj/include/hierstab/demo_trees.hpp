#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/hierarchy.hpp"
#include "hierstab/named_functions.hpp"

namespace hierstab {

namespace detail {

inline double component_cos_pi_x1(std::span<const double> v) {
    return std::cos(3.14159265358979323846 * v[0]);
}

inline double component_arccos_x1(std::span<const double> v) {
    return std::acos(std::clamp(v[0], -1.0, 1.0)) / 3.14159265358979323846;
}

// child 0 fastest: bit c of the flat index selects +1 for child c
template <class Fn>
std::vector<double> cube_component(std::size_t m, Fn&& f) {
    std::vector<double> vals(std::size_t{1} << m);
    std::vector<double> x(m);
    for (std::size_t k = 0; k < vals.size(); ++k) {
        for (std::size_t c = 0; c < m; ++c) x[c] = (k >> c) & 1u ? 1.0 : -1.0;
        vals[k] = f(std::span<const double>(x));
    }
    return vals;
}

inline HierarchyNode uniform_tree(int depth, std::size_t arity,
                                  const std::vector<double>& component, std::size_t& next_leaf) {
    if (depth == 0) return HierarchyNode::leaf(next_leaf++);
    std::vector<HierarchyNode> kids;
    kids.reserve(arity);
    for (std::size_t c = 0; c < arity; ++c) {
        kids.push_back(uniform_tree(depth - 1, arity, component, next_leaf));
    }
    return HierarchyNode::internal(component, std::move(kids));
}

}  // namespace detail

// Every internal node is majority of three, leaves are 3^depth fair bits.
inline HierarchySpec recursive_maj3_tree(int depth) {
    if (depth < 1) throw validation_error("recursive maj3: depth must be at least 1");
    const std::vector<double> comp = detail::cube_component(3, [](std::span<const double> x) {
        return x[0] + x[1] + x[2] > 0.0 ? 1.0 : -1.0;
    });
    std::size_t next = 0;
    HierarchySpec spec;
    spec.root = detail::uniform_tree(depth, 3, comp, next);
    spec.kind = HierarchyKind::multilinear;
    spec.declared_epsilon = 0.25;
    return spec;
}

// Every internal node is the product of two bits, leaves are 2^depth fair
// bits; the composed function is parity of all leaves.
inline HierarchySpec parity2_tree(int depth) {
    if (depth < 1) throw validation_error("parity tree: depth must be at least 1");
    const std::vector<double> comp = detail::cube_component(2, [](std::span<const double> x) {
        return x[0] * x[1];
    });
    std::size_t next = 0;
    HierarchySpec spec;
    spec.root = detail::uniform_tree(depth, 2, comp, next);
    spec.kind = HierarchyKind::multilinear;
    spec.declared_epsilon = 1.0;
    return spec;
}

// Binary tree alternating cos(pi x1) and arccos(x1)/pi, arccos at the root.
// For even depth the composition telescopes to the first coordinate on
// [0,1] inputs, yet no level is close to linear in any useful sense: the
// components ignore half their inputs and are not certifiable.
inline HierarchySpec cos_arccos_tree(int depth) {
    if (depth < 2 || depth % 2 != 0) {
        throw validation_error("cos-arccos tree: depth must be even and at least 2");
    }
    AnalyticComponent cosc{"cos_pi_x1", 2, &detail::component_cos_pi_x1};
    AnalyticComponent acosc{"arccos_x1_over_pi", 2, &detail::component_arccos_x1};
    std::size_t next = 0;
    // build bottom-up: level 1 applies cos, level 2 arccos, ...
    std::function<HierarchyNode(int)> build = [&](int level) -> HierarchyNode {
        if (level == 0) return HierarchyNode::leaf(next++);
        std::vector<HierarchyNode> kids;
        kids.push_back(build(level - 1));
        kids.push_back(build(level - 1));
        return HierarchyNode::internal(level % 2 == 1 ? cosc : acosc, std::move(kids));
    };
    HierarchySpec spec;
    spec.root = build(depth);
    spec.kind = HierarchyKind::general;
    spec.declared_epsilon = 0.5;
    return spec;
}

namespace detail {

// bottom component: x1 + 10 * maj(x1, x2, x3) on three bits
inline std::vector<double> carry_bottom_component() {
    return cube_component(3, [](std::span<const double> x) {
        const double maj = x[0] + x[1] + x[2] > 0.0 ? 1.0 : -1.0;
        return x[0] + 10.0 * maj;
    });
}

// upper component on outputs y in {-11,-9,9,11}: the low digit of y1 plus
// ten times the majority of the high digits
inline std::vector<double> carry_upper_component() {
    const std::vector<double> sup = {-11.0, -9.0, 9.0, 11.0};
    std::vector<double> vals(64);
    for (std::size_t k = 0; k < 64; ++k) {
        double y[3];
        y[0] = sup[k & 3u];
        y[1] = sup[(k >> 2) & 3u];
        y[2] = sup[(k >> 4) & 3u];
        double b1[3];
        for (int c = 0; c < 3; ++c) b1[c] = y[c] > 0.0 ? 1.0 : -1.0;
        const double b2 = y[0] - 10.0 * b1[0];
        const double maj = b1[0] + b1[1] + b1[2] > 0.0 ? 1.0 : -1.0;
        vals[k] = b2 + 10.0 * maj;
    }
    return vals;
}

}  // namespace detail

// Ternary tree on 3^depth fair bits computing x1 + 10 * (recursive majority).
// The first coordinate rides along in the low digit of every output, so each
// upper component is an exact function of single inputs plus a majority:
// its distance from the separable class is zero, and over the four-point
// supports it is not multilinear either. Still a legal composition tree.
inline HierarchySpec carry_majority_tree(int depth) {
    if (depth < 1) throw validation_error("carry majority: depth must be at least 1");
    const std::vector<double> bottom = detail::carry_bottom_component();
    const std::vector<double> upper = detail::carry_upper_component();
    std::size_t next = 0;
    std::function<HierarchyNode(int)> build = [&](int level) -> HierarchyNode {
        if (level == 0) return HierarchyNode::leaf(next++);
        std::vector<HierarchyNode> kids;
        for (int c = 0; c < 3; ++c) kids.push_back(build(level - 1));
        return HierarchyNode::internal(level == 1 ? bottom : upper, std::move(kids));
    };
    HierarchySpec spec;
    spec.root = build(depth);
    spec.kind = HierarchyKind::general;
    spec.declared_epsilon = 0.1;
    return spec;
}

// Direct evaluation of the carry-majority function, used as an oracle.
inline double carry_majority_direct(std::span<const double> x) {
    if (x.size() == 3) {
        const double maj = x[0] + x[1] + x[2] > 0.0 ? 1.0 : -1.0;
        return x[0] + 10.0 * maj;
    }
    const std::size_t third = x.size() / 3;
    const double y0 = carry_majority_direct(x.subspan(0, third));
    const double y1 = carry_majority_direct(x.subspan(third, third));
    const double y2 = carry_majority_direct(x.subspan(2 * third, third));
    double b1[3] = {y0 > 0.0 ? 1.0 : -1.0, y1 > 0.0 ? 1.0 : -1.0, y2 > 0.0 ? 1.0 : -1.0};
    const double maj = b1[0] + b1[1] + b1[2] > 0.0 ? 1.0 : -1.0;
    return (y0 - 10.0 * b1[0]) + 10.0 * maj;
}

}  // namespace hierstab
