#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"

namespace hierstab::detail {

// Row-major square matrix helper.
struct Matrix {
    std::size_t n = 0;
    std::vector<double> a;

    explicit Matrix(std::size_t dim = 0) : n(dim), a(dim * dim, 0.0) {}
    double& at(std::size_t i, std::size_t j) noexcept { return a[i * n + j]; }
    double at(std::size_t i, std::size_t j) const noexcept { return a[i * n + j]; }
};

struct SymmetricEigen {
    std::vector<double> values;               // descending
    std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k]
};

// Cyclic Jacobi rotations. Intended for the small dense matrices this
// library produces (dimension at most a few hundred).
inline SymmetricEigen jacobi_eigen(Matrix m, int max_sweeps = 100) {
    const std::size_t n = m.n;
    Matrix v(n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;
    if (n == 0) return {};

    double frob = 0.0;
    for (double x : m.a) frob += x * x;
    const double stop = 1e-26 * std::max(frob, 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        }
        if (off <= stop) break;
        if (sweep == max_sweeps - 1) {
            throw numerical_error("jacobi eigensolver did not converge, off-diagonal mass " +
                                  std::to_string(off));
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (apq == 0.0) continue;
                const double app = m.at(p, p), aqq = m.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return m.at(i, i) > m.at(j, j); });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.assign(n, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = m.at(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors[k][i] = v.at(i, order[k]);
    }
    return out;
}

struct PowerIterationResult {
    double value = 0.0;
    std::vector<double> vector;
    int iterations = 0;
    double residual = 0.0;
};

// Leading eigenpair of an operator given as apply(in, out) that is
// self-adjoint and positive-semidefinite in the (optionally weighted) inner
// product, with known eigenvectors deflated out each step. Converges on the
// orthogonal complement of the deflated space.
template <class Apply>
PowerIterationResult deflated_power_iteration(std::size_t dim, Apply&& apply,
                                              const std::vector<std::vector<double>>& deflate,
                                              const std::vector<double>& weight = {},
                                              std::uint64_t seed_mix = 0x243F6A8885A308D3ull,
                                              double tol = 1e-11, int max_iters = 10000) {
    std::vector<double> v(dim), w(dim);
    // deterministic, aperiodic start vector
    std::uint64_t h = seed_mix | 1;
    for (std::size_t i = 0; i < dim; ++i) {
        h ^= h >> 33;
        h *= 0xFF51AFD7ED558CCDull;
        h ^= h >> 33;
        v[i] = 0.25 + static_cast<double>(h % 1024) / 1024.0;
    }
    auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0.0;
        if (weight.empty()) {
            for (std::size_t i = 0; i < dim; ++i) s += x[i] * y[i];
        } else {
            for (std::size_t i = 0; i < dim; ++i) s += weight[i] * x[i] * y[i];
        }
        return s;
    };
    auto project_out = [&](std::vector<double>& x) {
        for (const auto& d : deflate) {
            const double nrm = dot(d, d);
            if (nrm <= 0.0) continue;
            const double f = dot(d, x) / nrm;
            for (std::size_t i = 0; i < dim; ++i) x[i] -= f * d[i];
        }
    };
    auto norm = [&](const std::vector<double>& x) { return std::sqrt(std::max(0.0, dot(x, x))); };
    project_out(v);
    double nv = norm(v);
    if (nv <= 1e-300) return {0.0, v, 0, 0.0};
    for (double& q : v) q /= nv;

    double lambda = 0.0;
    std::vector<double> resid(dim);
    for (int it = 1; it <= max_iters; ++it) {
        apply(v, w);
        project_out(w);
        const double ray = dot(v, w);
        for (std::size_t i = 0; i < dim; ++i) resid[i] = w[i] - ray * v[i];
        const double res = norm(resid);
        lambda = ray;
        const double nw = norm(w);
        if (nw <= 1e-300) return {0.0, v, it, 0.0};  // operator annihilates the complement
        for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / nw;
        if (res <= tol * std::max(1.0, std::abs(lambda))) {
            return {lambda, v, it, res};
        }
    }
    throw numerical_error("power iteration did not converge within " + std::to_string(max_iters) +
                          " steps");
}

}  // namespace hierstab::detail
