#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/product_space.hpp"

namespace hierstab {

// Dense multilinear coefficient arrays are limited to this many coordinates
// (2^26 doubles = 512 MiB). Larger tables cannot reach expand() anyway,
// because their value arrays already exceed the enumeration cap.
inline constexpr std::size_t kDenseCoefficientLimit = 26;

// Real-valued function on the x side of a product space, stored as a dense
// table in mixed-radix order (coordinate 0 fastest).
class FunctionTable {
public:
    FunctionTable(std::shared_ptr<const ProductSpace> space, std::vector<double> values)
        : space_(std::move(space)), values_(std::move(values)) {
        if (!space_) throw validation_error("function table: null space");
        const std::uint64_t expect = space_->x_state_count();
        if (values_.size() != expect) {
            throw validation_error("function table: " + std::to_string(values_.size()) +
                                   " values for a space with " + std::to_string(expect) + " states");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw validation_error("function table: values must be finite");
        }
        KahanSum m, m2;
        for_each_x_atom(*space_, [&](std::span<const std::size_t> idx, double p) {
            const double v = values_[flat_index(idx)];
            m.add(p * v);
            m2.add(p * v * v);
        }, std::numeric_limits<std::uint64_t>::max());
        mean_ = m.value();
        variance_ = std::max(0.0, m2.value() - mean_ * mean_);
        mass_ = m2.value();
    }

    const ProductSpace& space() const noexcept { return *space_; }
    const std::shared_ptr<const ProductSpace>& shared_space() const noexcept { return space_; }
    std::size_t n() const noexcept { return space_->n(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::uint64_t flat) const noexcept { return values_[flat]; }

    std::uint64_t flat_index(std::span<const std::size_t> idx) const noexcept {
        std::uint64_t flat = 0, stride = 1;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            flat += idx[i] * stride;
            stride *= space_->pair(i).x_marginal().size();
        }
        return flat;
    }

    double at(std::span<const std::size_t> idx) const noexcept { return values_[flat_index(idx)]; }

    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return variance_; }
    // E[f^2] under the x marginals
    double mass() const noexcept { return mass_; }
    bool essentially_constant() const noexcept {
        return variance_ <= kVarianceFloor * std::max(1.0, mass_);
    }

    // True iff some pair of slices along coordinate i differs by more than
    // 1e-10 relative to the table's scale.
    bool depends_on(std::size_t coordinate) const {
        const auto sizes = space_->x_sizes();
        const std::size_t s = sizes.at(coordinate);
        if (s <= 1) return false;
        std::uint64_t stride = 1;
        for (std::size_t i = 0; i < coordinate; ++i) stride *= sizes[i];
        const std::uint64_t block = stride * s;
        double scale = 1.0;
        for (double v : values_) scale = std::max(scale, std::abs(v));
        const double tol = 1e-10 * scale;
        for (std::uint64_t base = 0; base < values_.size(); base += block) {
            for (std::uint64_t off = 0; off < stride; ++off) {
                const double v0 = values_[base + off];
                for (std::size_t a = 1; a < s; ++a) {
                    if (std::abs(values_[base + off + a * stride] - v0) > tol) return true;
                }
            }
        }
        return false;
    }

private:
    std::shared_ptr<const ProductSpace> space_;
    std::vector<double> values_;
    double mean_ = 0.0;
    double variance_ = 0.0;
    double mass_ = 0.0;
};

// Coefficients of f = sum_S fhat(S) prod_{i in S} std(x_i) indexed by the
// subset bitmask S. The basis is orthonormal under the x marginals, so
// sum fhat^2 = E[f^2] (checked by the test suite, not here).
class FourierExpansion {
public:
    FourierExpansion(std::shared_ptr<const ProductSpace> space, std::vector<double> dense)
        : space_(std::move(space)), coef_(std::move(dense)) {
        if (!space_) throw validation_error("expansion: null space");
        if (space_->n() > kDenseCoefficientLimit) {
            throw capacity_error("expansion: dense coefficients limited to " +
                                 std::to_string(kDenseCoefficientLimit) + " coordinates");
        }
        if (coef_.size() != (std::uint64_t{1} << space_->n())) {
            throw validation_error("expansion: need 2^n coefficients");
        }
    }

    std::size_t n() const noexcept { return space_->n(); }
    const ProductSpace& space() const noexcept { return *space_; }
    const std::shared_ptr<const ProductSpace>& shared_space() const noexcept { return space_; }

    double coefficient(std::uint64_t mask) const { return coef_.at(mask); }
    std::span<const double> coefficients() const noexcept { return coef_; }

    double mean() const noexcept { return coef_[0]; }

    // sum over all S of fhat(S)^2
    double total_mass() const noexcept {
        KahanSum s;
        for (double c : coef_) s.add(c * c);
        return s.value();
    }

    // sum over nonempty S
    double variance() const noexcept {
        KahanSum s;
        for (std::size_t m = 1; m < coef_.size(); ++m) s.add(coef_[m] * coef_[m]);
        return s.value();
    }

    // mass_by_degree[d] = sum of fhat(S)^2 over |S| = d
    std::vector<double> degree_mass() const {
        std::vector<KahanSum> acc(n() + 1);
        for (std::uint64_t m = 0; m < coef_.size(); ++m) {
            acc[std::popcount(m)].add(coef_[m] * coef_[m]);
        }
        std::vector<double> out(acc.size());
        for (std::size_t d = 0; d < acc.size(); ++d) out[d] = acc[d].value();
        return out;
    }

    std::size_t max_degree() const noexcept {
        std::size_t deg = 0;
        for (std::uint64_t m = 0; m < coef_.size(); ++m) {
            if (coef_[m] != 0.0) deg = std::max(deg, static_cast<std::size_t>(std::popcount(m)));
        }
        return deg;
    }

private:
    std::shared_ptr<const ProductSpace> space_;
    std::vector<double> coef_;
};

namespace detail {

// One mixing pass along an axis of size s: replaces the axis by the two
// projections (onto 1 and onto the standardized coordinate). In-place when
// s == 2.
inline void sweep_axis_binary(std::vector<double>& buf, std::uint64_t stride, double p0, double p1,
                              double t0, double t1) {
    const std::uint64_t block = stride * 2;
    for (std::uint64_t base = 0; base < buf.size(); base += block) {
        for (std::uint64_t off = 0; off < stride; ++off) {
            const double v0 = buf[base + off];
            const double v1 = buf[base + off + stride];
            buf[base + off] = p0 * v0 + p1 * v1;
            buf[base + off + stride] = p0 * t0 * v0 + p1 * t1 * v1;
        }
    }
}

}  // namespace detail

// Multilinear expansion of a table in the standardized-coordinate product
// basis. Exact (single pass of weighted pairwise mixes) for binary supports;
// supports with more than two points additionally require the table to be
// multilinear, verified by reconstructing it from the coefficients.
inline FourierExpansion expand(const FunctionTable& f) {
    const ProductSpace& space = f.space();
    const std::size_t n = space.n();
    if (n > kDenseCoefficientLimit) {
        throw capacity_error("expand: more than " + std::to_string(kDenseCoefficientLimit) +
                             " coordinates");
    }
    const std::uint64_t need = std::max<std::uint64_t>(f.values().size(), std::uint64_t{1} << n);
    if (need > enumeration_cap()) {
        throw capacity_error("expand: " + std::to_string(need) +
                             " states exceed the enumeration cap");
    }
    std::vector<double> buf(f.values().begin(), f.values().end());
    bool any_wide = false;
    std::uint64_t out_stride = 1;  // processed axes each have size 2
    for (std::size_t i = 0; i < n; ++i) {
        const FiniteDistribution& d = space.pair(i).x_marginal();
        const std::size_t s = d.size();
        if (s == 2) {
            detail::sweep_axis_binary(buf, out_stride, d.probs()[0], d.probs()[1],
                                      d.standardized(0), d.standardized(1));
        } else {
            any_wide = true;
            const std::uint64_t blocks = buf.size() / (out_stride * s);
            std::vector<double> next(out_stride * 2 * blocks);
            for (std::uint64_t blk = 0; blk < blocks; ++blk) {
                const std::uint64_t src = blk * out_stride * s;
                const std::uint64_t dst = blk * out_stride * 2;
                for (std::uint64_t off = 0; off < out_stride; ++off) {
                    KahanSum c0, c1;
                    for (std::size_t a = 0; a < s; ++a) {
                        const double v = buf[src + off + a * out_stride];
                        c0.add(d.probs()[a] * v);
                        c1.add(d.probs()[a] * d.standardized(a) * v);
                    }
                    next[dst + off] = c0.value();
                    next[dst + off + out_stride] = c1.value();
                }
            }
            buf.swap(next);
        }
        out_stride *= 2;
    }

    FourierExpansion expn(f.shared_space(), std::move(buf));

    if (any_wide) {
        // Reconstruct and compare: coefficients describe f exactly only if f
        // was multilinear over the wide supports.
        double scale = 1.0;
        for (double v : f.values()) scale = std::max(scale, std::abs(v));
        std::vector<double> rec(expn.coefficients().begin(), expn.coefficients().end());
        std::uint64_t stride = std::uint64_t{1} << n;  // strides of the coefficient array, per axis
        // expand axes back out, last axis first so strides stay consistent
        for (std::size_t i = n; i-- > 0;) {
            stride >>= 1;
            const FiniteDistribution& d = space.pair(i).x_marginal();
            const std::size_t s = d.size();
            const std::uint64_t blocks = rec.size() / (stride * 2);
            std::vector<double> next(stride * s * blocks);
            for (std::uint64_t blk = 0; blk < blocks; ++blk) {
                const std::uint64_t src = blk * stride * 2;
                const std::uint64_t dst = blk * stride * s;
                for (std::uint64_t off = 0; off < stride; ++off) {
                    const double c0 = rec[src + off];
                    const double c1 = rec[src + off + stride];
                    for (std::size_t a = 0; a < s; ++a) {
                        next[dst + off + a * stride] = c0 + c1 * d.standardized(a);
                    }
                }
            }
            rec.swap(next);
        }
        double worst = 0.0;
        std::uint64_t worst_at = 0;
        for (std::uint64_t k = 0; k < rec.size(); ++k) {
            const double r = std::abs(rec[k] - f.values()[k]);
            if (r > worst) {
                worst = r;
                worst_at = k;
            }
        }
        if (worst > 1e-6 * std::max(1.0, scale)) {
            throw not_multilinear_error(
                "table is not multilinear over its supports: reconstruction differs by " +
                std::to_string(worst) + " at flat index " + std::to_string(worst_at));
        }
    }
    return expn;
}

// Fraction of nonconstant mass at degree >= 2. Zero for a constant function
// by convention.
inline double distance_to_lin(const FourierExpansion& F) {
    const double var = F.variance();
    if (var <= kVarianceFloor * std::max(1.0, F.total_mass())) return 0.0;
    KahanSum high;
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << F.n()); ++m) {
        if (std::popcount(m) >= 2) high.add(F.coefficient(m) * F.coefficient(m));
    }
    return std::clamp(high.value() / var, 0.0, 1.0);
}

// Corr(f(X), f(Y)) when coordinate i carries correlation rho_i:
// sum_{S nonempty} fhat(S)^2 prod_{i in S} rho_i, normalized by variance.
inline double stability(const FourierExpansion& F, std::span<const double> rhos) {
    if (rhos.size() != F.n()) {
        throw validation_error("stability: need one correlation per coordinate");
    }
    for (double r : rhos) {
        if (!(r >= -1.0 && r <= 1.0)) throw validation_error("stability: rho outside [-1,1]");
    }
    const double var = F.variance();
    if (var <= kVarianceFloor * std::max(1.0, F.total_mass())) return 0.0;
    KahanSum acc;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << F.n()); ++m) {
        const double c = F.coefficient(m);
        if (c == 0.0) continue;
        double w = c * c;
        std::uint64_t bits = m;
        while (bits) {
            w *= rhos[static_cast<std::size_t>(std::countr_zero(bits))];
            bits &= bits - 1;
        }
        acc.add(w);
    }
    return acc.value() / var;
}

inline double stability(const FourierExpansion& F, double rho) {
    std::vector<double> rhos(F.n(), rho);
    return stability(F, rhos);
}

// M(f, D) = sqrt(sum_{1<=|S|<=D} fhat^2 / Var f): correlation with the best
// degree-<=D approximation of the nonconstant part.
inline double low_degree_correlation(const FourierExpansion& F, std::size_t D) {
    if (D < 1 || D > F.n()) throw validation_error("low-degree correlation: D must be in [1, n]");
    const double var = F.variance();
    if (var <= kVarianceFloor * std::max(1.0, F.total_mass())) return 0.0;
    KahanSum low;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << F.n()); ++m) {
        if (static_cast<std::size_t>(std::popcount(m)) <= D) {
            low.add(F.coefficient(m) * F.coefficient(m));
        }
    }
    return std::sqrt(std::clamp(low.value() / var, 0.0, 1.0));
}

struct LowDegreeBoundReport {
    std::size_t degree = 1;
    double rho = 0.0;
    double correlation = 0.0;            // M(f, D)
    double sqrt_low_degree_mass = 0.0;   // sqrt(sum_{1<=|S|<=D} fhat^2), unnormalized
    double stability_value = 0.0;
    double bound = 0.0;                  // rho^{-D/2} sqrt(stability)
    double slack = 0.0;                  // bound - correlation
    bool holds = false;                  // slack >= -1e-9
};

// Low-degree mass is controlled by noise stability:
// M <= rho^{-D/2} sqrt(Stab_rho f). Requires 0 < rho < 1.
inline LowDegreeBoundReport check_low_degree_bound(const FourierExpansion& F, std::size_t D,
                                                   double rho) {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw validation_error("low-degree bound: rho must lie strictly between 0 and 1");
    }
    LowDegreeBoundReport rep;
    rep.degree = D;
    rep.rho = rho;
    rep.correlation = low_degree_correlation(F, D);
    const double var = F.variance();
    KahanSum low;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << F.n()); ++m) {
        if (static_cast<std::size_t>(std::popcount(m)) <= D) {
            low.add(F.coefficient(m) * F.coefficient(m));
        }
    }
    rep.sqrt_low_degree_mass = std::sqrt(std::max(0.0, low.value()));
    rep.stability_value = stability(F, rho);
    if (var <= kVarianceFloor * std::max(1.0, F.total_mass())) {
        rep.bound = 0.0;
        rep.slack = 0.0;
        rep.holds = true;
        return rep;
    }
    rep.bound = std::pow(rho, -static_cast<double>(D) / 2.0) * std::sqrt(std::max(0.0, rep.stability_value));
    rep.slack = rep.bound - rep.correlation;
    rep.holds = rep.slack >= -1e-9;
    return rep;
}

struct StabilityBoundReport {
    double rho = 0.0;
    double epsilon = 0.0;        // distance to linear
    double stability_value = 0.0;
    double bound = 0.0;          // (1-eps) rho + eps rho^2
    double slack = 0.0;          // bound - stability
    bool holds = false;          // slack >= -1e-9
    // For functions of degree <= 2 the matching floor (1-eps) rho applies.
    bool floor_applicable = false;
    double floor_value = 0.0;
    double floor_slack = 0.0;    // stability - floor
    bool floor_holds = false;
};

// One-level decay bound for multilinear f at uniform correlation rho:
// Stab_rho f <= (1-eps) rho + eps rho^2 with eps = distance_to_lin(f).
inline StabilityBoundReport check_stability_bound(const FourierExpansion& F, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw validation_error("stability bound: rho must lie in [0,1]");
    }
    StabilityBoundReport rep;
    rep.rho = rho;
    rep.epsilon = distance_to_lin(F);
    rep.stability_value = stability(F, rho);
    rep.bound = (1.0 - rep.epsilon) * rho + rep.epsilon * rho * rho;
    rep.slack = rep.bound - rep.stability_value;
    rep.holds = rep.slack >= -1e-9;
    if (F.max_degree() <= 2) {
        rep.floor_applicable = true;
        rep.floor_value = (1.0 - rep.epsilon) * rho;
        rep.floor_slack = rep.stability_value - rep.floor_value;
        rep.floor_holds = rep.floor_slack >= -1e-9;
    }
    return rep;
}

// Heterogeneous correlations: the bound is evaluated conservatively at
// max_i rho_i, which dominates every coordinate.
inline StabilityBoundReport check_stability_bound(const FourierExpansion& F,
                                                  std::span<const double> rhos) {
    double rho_max = 0.0;
    for (double r : rhos) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw validation_error("stability bound: rho must lie in [0,1]");
        }
        rho_max = std::max(rho_max, r);
    }
    StabilityBoundReport rep = check_stability_bound(F, rho_max);
    rep.stability_value = stability(F, rhos);
    rep.slack = rep.bound - rep.stability_value;
    rep.holds = rep.slack >= -1e-9;
    rep.floor_applicable = false;  // the floor needs equal correlations
    return rep;
}

}  // namespace hierstab
