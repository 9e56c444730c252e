#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/linalg.hpp"
#include "hierstab/product_space.hpp"
#include "hierstab/rng.hpp"

namespace hierstab {

namespace detail {

// Pushforward values are merged after rounding to 12 decimal digits, so
// equal outputs produced along different float paths land in one atom.
inline double round12(double v) noexcept {
    if (!(std::abs(v) < 4.0e3)) return v;  // quantum exceeds representable precision anyway
    return std::round(v * 1e12) / 1e12;
}

}  // namespace detail

// Conditional-expectation operator of a pair: (T g)(y) = E[g(X) | Y = y].
// Its adjoint between the weighted spaces is (T* h)(x) = E[h(Y) | X = x].
class MarkovOperator {
public:
    explicit MarkovOperator(const CorrelatedPair& pair) : pair_(&pair) {}

    std::vector<double> apply(std::span<const double> g) const {
        const auto& p = *pair_;
        const std::size_t sx = p.x_marginal().size(), sy = p.y_marginal().size();
        if (g.size() != sx) throw validation_error("markov operator: argument lives on the x support");
        std::vector<double> out(sy, 0.0);
        for (std::size_t b = 0; b < sy; ++b) {
            KahanSum acc;
            for (std::size_t a = 0; a < sx; ++a) acc.add(p.joint(a, b) * g[a]);
            out[b] = acc.value() / p.y_marginal().probs()[b];
        }
        return out;
    }

    std::vector<double> apply_adjoint(std::span<const double> h) const {
        const auto& p = *pair_;
        const std::size_t sx = p.x_marginal().size(), sy = p.y_marginal().size();
        if (h.size() != sy) throw validation_error("markov operator: argument lives on the y support");
        std::vector<double> out(sx, 0.0);
        for (std::size_t a = 0; a < sx; ++a) {
            KahanSum acc;
            for (std::size_t b = 0; b < sy; ++b) acc.add(p.joint(a, b) * h[b]);
            out[a] = acc.value() / p.x_marginal().probs()[a];
        }
        return out;
    }

private:
    const CorrelatedPair* pair_;
};

struct MaxcorrReport {
    double value = 0.0;        // spectral route (authoritative)
    double power_value = 0.0;  // Markov-operator route
    double agreement = 0.0;    // |value - power_value|
    double pearson = 0.0;
    bool degenerate = false;   // one side is a point mass
    int power_iterations = 0;
    double power_residual = 0.0;
};

namespace detail {

// Route one: top singular value of the centered kernel
// Q(a,b) = (J(a,b) - px(a) py(b)) / sqrt(px(a) py(b)), computed from its
// Gram matrix on the smaller side. Centering removes the unit singular
// pair (sqrt of the marginals) analytically, so the leading value left is
// the maximal correlation itself and values near zero come out with
// relative accuracy instead of drowning in the unit mode's rounding.
inline double maxcorr_spectral(const CorrelatedPair& pair, int* iters = nullptr,
                               double* residual = nullptr) {
    const std::size_t sx = pair.x_marginal().size(), sy = pair.y_marginal().size();
    const auto& px = pair.x_marginal().probs();
    const auto& py = pair.y_marginal().probs();
    std::vector<std::vector<double>> centered(sx, std::vector<double>(sy));
    for (std::size_t a = 0; a < sx; ++a) {
        for (std::size_t b = 0; b < sy; ++b) {
            centered[a][b] = (pair.joint(a, b) - px[a] * py[b]) / std::sqrt(px[a] * py[b]);
        }
    }
    const bool use_y = sy <= sx;
    const std::size_t k = use_y ? sy : sx;
    Matrix gram(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            KahanSum acc;
            if (use_y) {
                for (std::size_t a = 0; a < sx; ++a) acc.add(centered[a][i] * centered[a][j]);
            } else {
                for (std::size_t b = 0; b < sy; ++b) acc.add(centered[i][b] * centered[j][b]);
            }
            gram.at(i, j) = acc.value();
            gram.at(j, i) = gram.at(i, j);
        }
    }
    if (k <= 64) {
        const SymmetricEigen eig = jacobi_eigen(gram);
        if (iters) *iters = 0;
        if (residual) *residual = 0.0;
        return std::sqrt(std::clamp(eig.values[0], 0.0, 1.0));
    }
    // large side: the sqrt-marginal vector spans the centered kernel's null
    // direction; deflating it keeps the iteration away from rounding dust.
    std::vector<double> top(k);
    for (std::size_t i = 0; i < k; ++i) {
        top[i] = std::sqrt(use_y ? py[i] : px[i]);
    }
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t i = 0; i < k; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += gram.at(i, j) * in[j];
            out[i] = s;
        }
    };
    const PowerIterationResult r = deflated_power_iteration(k, apply, {top});
    if (iters) *iters = r.iterations;
    if (residual) *residual = r.residual;
    return std::sqrt(std::clamp(r.value, 0.0, 1.0));
}

// Route two: power iteration of g -> T*(T g) on mean-zero functions of X,
// in the px-weighted inner product. Kept structurally separate from the
// spectral route so the two results cross-check each other. The rank-one
// product part of the joint is subtracted from the kernel up front; on
// mean-zero inputs that changes nothing analytically but keeps the
// iteration's rounding floor proportional to the true correlation.
inline double maxcorr_markov(const CorrelatedPair& pair, int* iters = nullptr,
                             double* residual = nullptr) {
    const std::size_t sx = pair.x_marginal().size(), sy = pair.y_marginal().size();
    const auto& px = pair.x_marginal().probs();
    const auto& py = pair.y_marginal().probs();
    std::vector<std::vector<double>> centered(sx, std::vector<double>(sy));
    for (std::size_t a = 0; a < sx; ++a) {
        for (std::size_t b = 0; b < sy; ++b) {
            centered[a][b] = pair.joint(a, b) - px[a] * py[b];
        }
    }
    const std::vector<double> weight = px;
    const std::vector<std::vector<double>> ones = {std::vector<double>(sx, 1.0)};
    std::vector<double> mid(sy);
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t b = 0; b < sy; ++b) {
            KahanSum acc;
            for (std::size_t a = 0; a < sx; ++a) acc.add(centered[a][b] * in[a]);
            mid[b] = acc.value() / py[b];
        }
        out.assign(sx, 0.0);
        for (std::size_t a = 0; a < sx; ++a) {
            KahanSum acc;
            for (std::size_t b = 0; b < sy; ++b) acc.add(centered[a][b] * mid[b]);
            out[a] = acc.value() / px[a];
        }
    };
    const PowerIterationResult r =
        deflated_power_iteration(sx, apply, ones, weight, 0x9E3779B97F4A7C15ull);
    if (iters) *iters = r.iterations;
    if (residual) *residual = r.residual;
    return std::sqrt(std::clamp(r.value, 0.0, 1.0));
}

}  // namespace detail

// Both routes plus their agreement. The spectral value is authoritative.
inline MaxcorrReport maximal_correlation_report(const CorrelatedPair& pair) {
    MaxcorrReport rep;
    rep.pearson = pair.pearson();
    if (pair.x_marginal().degenerate() || pair.y_marginal().degenerate()) {
        rep.degenerate = true;
        pair.store_maximal_correlation(0.0);
        return rep;
    }
    rep.value = detail::maxcorr_spectral(pair);
    rep.power_value = detail::maxcorr_markov(pair, &rep.power_iterations, &rep.power_residual);
    rep.agreement = std::abs(rep.value - rep.power_value);
    pair.store_maximal_correlation(rep.value);
    return rep;
}

// Hirschfeld-Gebelein-Renyi maximal correlation of one coordinate pair.
// Cached on the pair after the first computation.
inline double maximal_correlation(const CorrelatedPair& pair) {
    const double cached = pair.cached_maximal_correlation();
    if (cached == cached) return cached;  // already computed
    if (pair.x_marginal().degenerate() || pair.y_marginal().degenerate()) {
        pair.store_maximal_correlation(0.0);
        return 0.0;
    }
    const double v = detail::maxcorr_spectral(pair);
    pair.store_maximal_correlation(v);
    return v;
}

// Joint law of (f(X), g(Y)) by exact enumeration. f reads the x side,
// g the y side. Output supports are the rounded distinct values.
inline CorrelatedPair induced_pair(const FunctionTable& f, const FunctionTable& g,
                                   const ProductSpace& space,
                                   std::uint64_t cap = enumeration_cap()) {
    if (f.values().size() != space.x_state_count() || g.values().size() != space.y_state_count()) {
        throw validation_error("induced pair: tables do not match the space sides");
    }
    std::map<double, std::size_t> fv, gv;
    {
        // collect rounded output supports
        for (double v : f.values()) fv.emplace(detail::round12(v), 0);
        for (double v : g.values()) gv.emplace(detail::round12(v), 0);
        std::size_t k = 0;
        for (auto& e : fv) e.second = k++;
        k = 0;
        for (auto& e : gv) e.second = k++;
    }
    std::vector<std::vector<KahanSum>> mass(fv.size(), std::vector<KahanSum>(gv.size()));
    std::vector<std::size_t> ystrides(space.n());
    std::uint64_t s = 1;
    for (std::size_t i = 0; i < space.n(); ++i) {
        ystrides[i] = s;
        s *= space.pair(i).y_marginal().size();
    }
    for_each_joint_atom(space, [&](std::span<const std::size_t> xi, std::span<const std::size_t> yi,
                                   double p) {
        std::uint64_t yflat = 0;
        for (std::size_t i = 0; i < yi.size(); ++i) yflat += yi[i] * ystrides[i];
        const std::size_t a = fv.find(detail::round12(f.at(xi)))->second;
        const std::size_t b = gv.find(detail::round12(g[yflat]))->second;
        mass[a][b].add(p);
    }, cap);
    std::vector<double> fsup, gsup;
    fsup.reserve(fv.size());
    gsup.reserve(gv.size());
    for (const auto& e : fv) fsup.push_back(e.first);
    for (const auto& e : gv) gsup.push_back(e.first);
    std::vector<std::vector<double>> joint(fsup.size(), std::vector<double>(gsup.size()));
    double total = 0.0;
    for (std::size_t a = 0; a < fsup.size(); ++a) {
        for (std::size_t b = 0; b < gsup.size(); ++b) {
            joint[a][b] = mass[a][b].value();
            total += joint[a][b];
        }
    }
    // squeeze float dust so the pair validator sees exact margins
    for (auto& row : joint) {
        for (double& v : row) v /= total;
    }
    return pair_from_joint(std::move(fsup), std::move(gsup), joint);
}

// Monte Carlo stand-in for induced_pair when the space exceeds the cap.
// Supports are taken from the tables; the joint is an empirical histogram.
inline CorrelatedPair induced_pair_mc(const FunctionTable& f, const FunctionTable& g,
                                      std::shared_ptr<const ProductSpace> space, std::uint64_t seed,
                                      std::uint64_t samples) {
    if (samples == 0) throw validation_error("induced pair mc: need at least one sample");
    std::map<double, std::size_t> fv, gv;
    for (double v : f.values()) fv.emplace(detail::round12(v), 0);
    for (double v : g.values()) gv.emplace(detail::round12(v), 0);
    std::size_t k = 0;
    for (auto& e : fv) e.second = k++;
    k = 0;
    for (auto& e : gv) e.second = k++;
    std::vector<std::vector<double>> counts(fv.size(), std::vector<double>(gv.size(), 0.0));
    const PairSampler sampler(space, seed);
    std::vector<std::size_t> xi, yi;
    std::vector<std::size_t> ystrides(space->n());
    std::uint64_t s = 1;
    for (std::size_t i = 0; i < space->n(); ++i) {
        ystrides[i] = s;
        s *= space->pair(i).y_marginal().size();
    }
    for (std::uint64_t it = 0; it < samples; ++it) {
        sampler.draw_indices(it, xi, yi);
        std::uint64_t yflat = 0;
        for (std::size_t i = 0; i < yi.size(); ++i) yflat += yi[i] * ystrides[i];
        const std::size_t a = fv.find(detail::round12(f.at(xi)))->second;
        const std::size_t b = gv.find(detail::round12(g[yflat]))->second;
        counts[a][b] += 1.0;
    }
    // drop empty rows/columns, then normalize
    std::vector<double> fsup, gsup;
    std::vector<std::size_t> rkeep, ckeep;
    {
        std::size_t a = 0;
        for (const auto& e : fv) {
            double rs = 0.0;
            for (double c : counts[a]) rs += c;
            if (rs > 0.0) {
                rkeep.push_back(a);
                fsup.push_back(e.first);
            }
            ++a;
        }
        std::size_t b = 0;
        for (const auto& e : gv) {
            double cs = 0.0;
            for (std::size_t r = 0; r < counts.size(); ++r) cs += counts[r][b];
            if (cs > 0.0) {
                ckeep.push_back(b);
                gsup.push_back(e.first);
            }
            ++b;
        }
    }
    std::vector<std::vector<double>> joint(rkeep.size(), std::vector<double>(ckeep.size()));
    for (std::size_t r = 0; r < rkeep.size(); ++r) {
        for (std::size_t c = 0; c < ckeep.size(); ++c) {
            joint[r][c] = counts[rkeep[r]][ckeep[c]] / static_cast<double>(samples);
        }
    }
    return pair_from_joint(std::move(fsup), std::move(gsup), joint);
}

struct NonSeparabilityReport {
    double epsilon = 0.0;              // 1 - lambda_max
    double corr_to_separable = 0.0;    // sqrt(lambda_max)
    bool degenerate = false;           // constant f
    std::vector<double> output_support;
    std::vector<double> output_probs;
    std::vector<double> witness;       // optimal g on the output support, E g = 0, E g^2 = 1
};

// How far f(X) is from the closed span of single-coordinate functions:
// epsilon = 1 - max_g sum_i Var_i(E[g(f(X)) | X_i]) over unit-variance g,
// computed as the top eigenvalue of a K x K PSD matrix on the mean-zero
// subspace of L2(f(X)). Satisfies corr^2 + epsilon = 1.
inline NonSeparabilityReport non_separability(const FunctionTable& f,
                                              std::uint64_t cap = enumeration_cap()) {
    const ProductSpace& space = f.space();
    const std::size_t n = space.n();
    NonSeparabilityReport rep;

    // pushforward of f under the x marginals
    std::map<double, std::size_t> vals;
    for (double v : f.values()) vals.emplace(detail::round12(v), 0);
    std::size_t k = 0;
    for (auto& e : vals) e.second = k++;
    const std::size_t K = vals.size();
    rep.output_support.reserve(K);
    for (const auto& e : vals) rep.output_support.push_back(e.first);

    std::vector<KahanSum> qacc(K);
    // cond[i][a][k] accumulates P(X_i = a, f = v_k)
    std::vector<std::vector<std::vector<KahanSum>>> cond(n);
    for (std::size_t i = 0; i < n; ++i) {
        cond[i].assign(space.pair(i).x_marginal().size(), std::vector<KahanSum>(K));
    }
    for_each_x_atom(space, [&](std::span<const std::size_t> idx, double p) {
        const std::size_t vk = vals.find(detail::round12(f.at(idx)))->second;
        qacc[vk].add(p);
        for (std::size_t i = 0; i < n; ++i) cond[i][idx[i]][vk].add(p);
    }, cap);

    std::vector<double> q(K);
    for (std::size_t j = 0; j < K; ++j) q[j] = qacc[j].value();
    rep.output_probs = q;

    if (K == 1 || f.essentially_constant()) {
        rep.degenerate = true;
        rep.epsilon = 0.0;
        rep.corr_to_separable = 0.0;
        return rep;
    }

    // A = sum_i Rt_i^T W_i Rt_i with Rt_i(a,k) = P(f=v_k | X_i=a) - q_k and
    // W_i = diag(px_i); then B = Q^{-1/2} A Q^{-1/2} with Q = diag(q).
    detail::Matrix B(K);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& px = space.pair(i).x_marginal().probs();
        const std::size_t s = px.size();
        std::vector<std::vector<double>> rt(s, std::vector<double>(K));
        for (std::size_t a = 0; a < s; ++a) {
            for (std::size_t j = 0; j < K; ++j) {
                rt[a][j] = cond[i][a][j].value() / px[a] - q[j];
            }
        }
        for (std::size_t j = 0; j < K; ++j) {
            for (std::size_t l = j; l < K; ++l) {
                KahanSum acc;
                for (std::size_t a = 0; a < s; ++a) acc.add(px[a] * rt[a][j] * rt[a][l]);
                B.at(j, l) += acc.value();
                if (l != j) B.at(l, j) = B.at(j, l);
            }
        }
    }
    for (std::size_t j = 0; j < K; ++j) {
        for (std::size_t l = 0; l < K; ++l) {
            B.at(j, l) /= std::sqrt(q[j] * q[l]);
        }
    }

    double lambda = 0.0;
    std::vector<double> u(K, 0.0);
    if (K <= 64) {
        const detail::SymmetricEigen eig = detail::jacobi_eigen(B);
        lambda = eig.values[0];
        u = eig.vectors[0];
    } else {
        std::vector<double> sq(K);
        for (std::size_t j = 0; j < K; ++j) sq[j] = std::sqrt(q[j]);
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            out.assign(K, 0.0);
            for (std::size_t j = 0; j < K; ++j) {
                double sum = 0.0;
                for (std::size_t l = 0; l < K; ++l) sum += B.at(j, l) * in[l];
                out[j] = sum;
            }
        };
        const detail::PowerIterationResult r = detail::deflated_power_iteration(K, apply, {sq});
        lambda = r.value;
        u = r.vector;
    }
    lambda = std::clamp(lambda, 0.0, 1.0);
    rep.epsilon = 1.0 - lambda;
    rep.corr_to_separable = std::sqrt(lambda);

    // witness g(v_k) = u_k / sqrt(q_k), centered and unit-scaled
    rep.witness.resize(K);
    for (std::size_t j = 0; j < K; ++j) rep.witness[j] = u[j] / std::sqrt(q[j]);
    double mean = 0.0;
    for (std::size_t j = 0; j < K; ++j) mean += q[j] * rep.witness[j];
    double e2 = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
        rep.witness[j] -= mean;
        e2 += q[j] * rep.witness[j] * rep.witness[j];
    }
    if (e2 > 0.0) {
        const double scale = 1.0 / std::sqrt(e2);
        for (double& w : rep.witness) w *= scale;
    }
    for (double w : rep.witness) {
        if (std::abs(w) > 1e-12) {
            if (w < 0.0) {
                for (double& x : rep.witness) x = -x;
            }
            break;
        }
    }
    return rep;
}

}  // namespace hierstab
