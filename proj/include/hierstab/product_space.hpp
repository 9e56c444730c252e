#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/rng.hpp"

namespace hierstab {

inline constexpr double kProbTol = 1e-12;

// Variance below this (relative to max(1, E[f^2])) is treated as zero.
inline constexpr double kVarianceFloor = 1e-18;

// Exact-enumeration budget in atoms; HIERSTAB_CAP overrides the default 2^26.
inline std::uint64_t enumeration_cap() {
    static const std::uint64_t cap = [] {
        if (const char* env = std::getenv("HIERSTAB_CAP")) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(env, &end, 10);
            if (end != env && *end == '\0' && v > 0) {
                return static_cast<std::uint64_t>(v);
            }
        }
        return std::uint64_t{1} << 26;
    }();
    return cap;
}

namespace detail {

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) noexcept {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return a * b;
}

}  // namespace detail

// Law of a real random variable on a finite, strictly increasing support.
// Mean and variance are fixed at construction.
class FiniteDistribution {
public:
    FiniteDistribution(std::vector<double> support, std::vector<double> probs)
        : support_(std::move(support)), probs_(std::move(probs)) {
        if (support_.empty() || support_.size() != probs_.size()) {
            throw validation_error("distribution: support and probabilities must be nonempty and equal-length");
        }
        double total = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            if (!std::isfinite(support_[i])) {
                throw validation_error("distribution: support values must be finite");
            }
            if (i > 0 && !(support_[i] > support_[i - 1])) {
                throw validation_error("distribution: support must be strictly increasing");
            }
            if (!(probs_[i] > 0.0) || !std::isfinite(probs_[i])) {
                throw validation_error("distribution: probabilities must be positive");
            }
            total += probs_[i];
        }
        if (std::abs(total - 1.0) > kProbTol) {
            throw validation_error("distribution: probabilities sum to " + std::to_string(total) +
                                   ", expected 1 within 1e-12");
        }
        KahanSum m;
        for (std::size_t i = 0; i < support_.size(); ++i) m.add(probs_[i] * support_[i]);
        mean_ = m.value();
        KahanSum v;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            const double d = support_[i] - mean_;
            v.add(probs_[i] * d * d);
        }
        variance_ = std::max(0.0, v.value());
        cum_.resize(probs_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            acc += probs_[i];
            cum_[i] = acc;
        }
        cum_.back() = 1.0;
    }

    static FiniteDistribution uniform_pm1() {
        return FiniteDistribution({-1.0, 1.0}, {0.5, 0.5});
    }

    static FiniteDistribution uniform(std::vector<double> support) {
        const std::size_t s = support.size();
        if (s == 0) throw validation_error("distribution: empty support");
        return FiniteDistribution(std::move(support),
                                  std::vector<double>(s, 1.0 / static_cast<double>(s)));
    }

    std::size_t size() const noexcept { return support_.size(); }
    const std::vector<double>& support() const noexcept { return support_; }
    const std::vector<double>& probs() const noexcept { return probs_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return variance_; }
    bool degenerate() const noexcept { return support_.size() == 1; }

    // (x - mean) / sd; zero for a one-point law.
    double standardized(std::size_t i) const noexcept {
        if (degenerate()) return 0.0;
        return (support_[i] - mean_) / std::sqrt(variance_);
    }

    // Inverse-CDF draw from one uniform.
    std::size_t sample_index(double u) const noexcept {
        const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), cum_.size() - 1);
    }

private:
    std::vector<double> support_;
    std::vector<double> probs_;
    std::vector<double> cum_;
    double mean_ = 0.0;
    double variance_ = 0.0;
};

// One coordinate of the product: a joint law on x-support x y-support whose
// margins match the stored marginals. pearson() is computed once from the
// joint; the maximal correlation slot is filled lazily by the maxcorr module.
class CorrelatedPair {
public:
    CorrelatedPair(FiniteDistribution x_marginal, FiniteDistribution y_marginal,
                   std::vector<std::vector<double>> joint)
        : x_(std::move(x_marginal)), y_(std::move(y_marginal)), joint_(std::move(joint)),
          maxcorr_cache_(std::make_shared<std::atomic<double>>(std::numeric_limits<double>::quiet_NaN())) {
        const std::size_t sx = x_.size(), sy = y_.size();
        if (joint_.size() != sx) {
            throw validation_error("pair: joint row count does not match x support");
        }
        double total = 0.0;
        for (std::size_t a = 0; a < sx; ++a) {
            if (joint_[a].size() != sy) {
                throw validation_error("pair: joint column count does not match y support");
            }
            double row = 0.0;
            for (double v : joint_[a]) {
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw validation_error("pair: joint entries must be nonnegative");
                }
                row += v;
            }
            if (std::abs(row - x_.probs()[a]) > kProbTol) {
                throw validation_error("pair: joint row " + std::to_string(a) +
                                       " does not sum to its x marginal probability");
            }
            total += row;
        }
        for (std::size_t b = 0; b < sy; ++b) {
            double col = 0.0;
            for (std::size_t a = 0; a < sx; ++a) col += joint_[a][b];
            if (std::abs(col - y_.probs()[b]) > kProbTol) {
                throw validation_error("pair: joint column " + std::to_string(b) +
                                       " does not sum to its y marginal probability");
            }
        }
        if (std::abs(total - 1.0) > kProbTol) {
            throw validation_error("pair: joint mass sums to " + std::to_string(total));
        }
        flat_joint_.reserve(sx * sy);
        cum_joint_.reserve(sx * sy);
        double acc = 0.0;
        for (std::size_t a = 0; a < sx; ++a) {
            for (std::size_t b = 0; b < sy; ++b) {
                flat_joint_.push_back(joint_[a][b]);
                acc += joint_[a][b];
                cum_joint_.push_back(acc);
            }
        }
        cum_joint_.back() = 1.0;
        if (x_.degenerate() || y_.degenerate()) {
            degenerate_correlation_ = true;
            pearson_ = 0.0;
        } else {
            KahanSum exy;
            for (std::size_t a = 0; a < sx; ++a) {
                for (std::size_t b = 0; b < sy; ++b) {
                    exy.add(joint_[a][b] * x_.support()[a] * y_.support()[b]);
                }
            }
            const double cov = exy.value() - x_.mean() * y_.mean();
            pearson_ = std::clamp(cov / std::sqrt(x_.variance() * y_.variance()), -1.0, 1.0);
        }
    }

    const FiniteDistribution& x_marginal() const noexcept { return x_; }
    const FiniteDistribution& y_marginal() const noexcept { return y_; }
    double joint(std::size_t a, std::size_t b) const noexcept { return joint_[a][b]; }
    const std::vector<std::vector<double>>& joint() const noexcept { return joint_; }
    std::size_t atom_count() const noexcept { return flat_joint_.size(); }

    double pearson() const noexcept { return pearson_; }
    bool degenerate_correlation() const noexcept { return degenerate_correlation_; }

    // One inverse-CDF draw over the flattened joint, y index fastest.
    void sample_atom(double u, std::size_t& a, std::size_t& b) const noexcept {
        const auto it = std::upper_bound(cum_joint_.begin(), cum_joint_.end(), u);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cum_joint_.begin()),
                                                    cum_joint_.size() - 1);
        a = k / y_.size();
        b = k % y_.size();
    }

    double cached_maximal_correlation() const noexcept { return maxcorr_cache_->load(); }
    void store_maximal_correlation(double v) const noexcept { maxcorr_cache_->store(v); }

private:
    FiniteDistribution x_;
    FiniteDistribution y_;
    std::vector<std::vector<double>> joint_;
    std::vector<double> flat_joint_;
    std::vector<double> cum_joint_;
    double pearson_ = 0.0;
    bool degenerate_correlation_ = false;
    std::shared_ptr<std::atomic<double>> maxcorr_cache_;
};

// Y = X with probability rho, an independent fresh draw otherwise:
// joint(a,b) = rho*p(a)*[a==b] + (1-rho)*p(a)*p(b). Pearson correlation of
// the result is exactly rho.
inline CorrelatedPair make_resampling_coupling(const FiniteDistribution& marginal, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw validation_error("resampling coupling requires rho in [0,1]");
    }
    const std::size_t s = marginal.size();
    std::vector<std::vector<double>> joint(s, std::vector<double>(s, 0.0));
    for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b < s; ++b) {
            double v = (1.0 - rho) * marginal.probs()[a] * marginal.probs()[b];
            if (a == b) v += rho * marginal.probs()[a];
            joint[a][b] = v;
        }
    }
    return CorrelatedPair(marginal, marginal, std::move(joint));
}

// Marginals derived from the joint's row and column sums.
inline CorrelatedPair pair_from_joint(std::vector<double> x_support, std::vector<double> y_support,
                                      const std::vector<std::vector<double>>& joint) {
    if (joint.empty() || joint.size() != x_support.size()) {
        throw validation_error("pair: joint shape does not match supports");
    }
    std::vector<double> px(x_support.size(), 0.0), py(y_support.size(), 0.0);
    for (std::size_t a = 0; a < joint.size(); ++a) {
        if (joint[a].size() != y_support.size()) {
            throw validation_error("pair: joint shape does not match supports");
        }
        for (std::size_t b = 0; b < joint[a].size(); ++b) {
            px[a] += joint[a][b];
            py[b] += joint[a][b];
        }
    }
    return CorrelatedPair(FiniteDistribution(std::move(x_support), std::move(px)),
                          FiniteDistribution(std::move(y_support), std::move(py)),
                          joint);
}

// Independent coordinates, each a correlated (X_i, Y_i) pair.
class ProductSpace {
public:
    explicit ProductSpace(std::vector<CorrelatedPair> pairs) : pairs_(std::move(pairs)) {
        if (pairs_.empty()) throw validation_error("product space needs at least one coordinate");
    }

    std::size_t n() const noexcept { return pairs_.size(); }
    const CorrelatedPair& pair(std::size_t i) const { return pairs_.at(i); }

    std::vector<std::size_t> x_sizes() const {
        std::vector<std::size_t> s(pairs_.size());
        for (std::size_t i = 0; i < pairs_.size(); ++i) s[i] = pairs_[i].x_marginal().size();
        return s;
    }
    std::vector<std::size_t> y_sizes() const {
        std::vector<std::size_t> s(pairs_.size());
        for (std::size_t i = 0; i < pairs_.size(); ++i) s[i] = pairs_[i].y_marginal().size();
        return s;
    }

    std::uint64_t x_state_count() const noexcept {
        std::uint64_t c = 1;
        for (const auto& p : pairs_) c = detail::saturating_mul(c, p.x_marginal().size());
        return c;
    }
    std::uint64_t y_state_count() const noexcept {
        std::uint64_t c = 1;
        for (const auto& p : pairs_) c = detail::saturating_mul(c, p.y_marginal().size());
        return c;
    }
    std::uint64_t joint_state_count() const noexcept {
        std::uint64_t c = 1;
        for (const auto& p : pairs_) {
            c = detail::saturating_mul(c, p.x_marginal().size() * p.y_marginal().size());
        }
        return c;
    }

private:
    std::vector<CorrelatedPair> pairs_;
};

inline std::shared_ptr<const ProductSpace> make_resampling_space(const FiniteDistribution& marginal,
                                                                 std::size_t n, double rho) {
    std::vector<CorrelatedPair> pairs;
    pairs.reserve(n);
    const CorrelatedPair p = make_resampling_coupling(marginal, rho);
    for (std::size_t i = 0; i < n; ++i) pairs.push_back(p);
    return std::make_shared<ProductSpace>(std::move(pairs));
}

// Visits every x-side atom in mixed-radix order, coordinate 0 fastest.
// fn(indices, probability). Throws capacity_error beyond the cap.
template <class Fn>
void for_each_x_atom(const ProductSpace& space, Fn&& fn, std::uint64_t cap = enumeration_cap()) {
    const std::uint64_t count = space.x_state_count();
    if (count > cap) {
        throw capacity_error("x enumeration needs " + std::to_string(count) + " atoms, cap is " +
                             std::to_string(cap));
    }
    const std::size_t n = space.n();
    std::vector<std::size_t> idx(n, 0);
    // suffix[i] = product of marginal probs for coordinates i..n-1
    std::vector<double> suffix(n + 1, 1.0);
    for (std::size_t i = n; i-- > 0;) {
        suffix[i] = space.pair(i).x_marginal().probs()[0] * suffix[i + 1];
    }
    for (std::uint64_t flat = 0; flat < count; ++flat) {
        fn(std::span<const std::size_t>(idx), suffix[0]);
        std::size_t i = 0;
        for (; i < n; ++i) {
            if (++idx[i] < space.pair(i).x_marginal().size()) break;
            idx[i] = 0;
        }
        if (i == n) break;
        for (std::size_t j = i + 1; j-- > 0;) {
            suffix[j] = space.pair(j).x_marginal().probs()[idx[j]] * suffix[j + 1];
        }
    }
}

// Joint atoms ((x_1..x_n),(y_1..y_n)) in mixed-radix order: coordinate 0
// fastest; within a coordinate the x index is the faster digit.
template <class Fn>
void for_each_joint_atom(const ProductSpace& space, Fn&& fn, std::uint64_t cap = enumeration_cap()) {
    const std::uint64_t count = space.joint_state_count();
    if (count > cap) {
        throw capacity_error("joint enumeration needs " + std::to_string(count) + " atoms, cap is " +
                             std::to_string(cap));
    }
    const std::size_t n = space.n();
    std::vector<std::size_t> xi(n, 0), yi(n, 0);
    std::vector<double> suffix(n + 1, 1.0);
    for (std::size_t i = n; i-- > 0;) {
        suffix[i] = space.pair(i).joint(0, 0) * suffix[i + 1];
    }
    for (std::uint64_t flat = 0; flat < count; ++flat) {
        fn(std::span<const std::size_t>(xi), std::span<const std::size_t>(yi), suffix[0]);
        std::size_t i = 0;
        for (; i < n; ++i) {
            const auto& pr = space.pair(i);
            if (++xi[i] < pr.x_marginal().size()) break;
            xi[i] = 0;
            if (++yi[i] < pr.y_marginal().size()) break;
            yi[i] = 0;
        }
        if (i == n) break;
        for (std::size_t j = i + 1; j-- > 0;) {
            suffix[j] = space.pair(j).joint(xi[j], yi[j]) * suffix[j + 1];
        }
    }
}

// Deterministic coordinatewise sampler. Draw k of coordinate i uses the
// Philox word at (seed, sampler_salt + i, k): values depend only on
// (seed, index, coordinate), never on worker count or call order.
class PairSampler {
public:
    PairSampler(std::shared_ptr<const ProductSpace> space, std::uint64_t seed)
        : space_(std::move(space)), seed_(seed) {}

    const ProductSpace& space() const noexcept { return *space_; }
    std::uint64_t seed() const noexcept { return seed_; }

    void draw_indices(std::uint64_t index, std::vector<std::size_t>& x_idx,
                      std::vector<std::size_t>& y_idx) const {
        const std::size_t n = space_->n();
        x_idx.resize(n);
        y_idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = RngStream::unit_at(seed_, stream_salt::product_sampler + i, index);
            space_->pair(i).sample_atom(u, x_idx[i], y_idx[i]);
        }
    }

    void draw_values(std::uint64_t index, std::vector<double>& x, std::vector<double>& y) const {
        const std::size_t n = space_->n();
        thread_local std::vector<std::size_t> xi, yi;
        draw_indices(index, xi, yi);
        x.resize(n);
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = space_->pair(i).x_marginal().support()[xi[i]];
            y[i] = space_->pair(i).y_marginal().support()[yi[i]];
        }
    }

private:
    std::shared_ptr<const ProductSpace> space_;
    std::uint64_t seed_;
};

}  // namespace hierstab
