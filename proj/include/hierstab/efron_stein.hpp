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
#include "hierstab/fourier.hpp"
#include "hierstab/maxcorr.hpp"
#include "hierstab/product_space.hpp"

namespace hierstab {

// Orthogonal decomposition f = sum_S f_S where f_S depends only on the
// coordinates in S and E[f_S | X_T] = 0 whenever S is not contained in T.
// Components are stored as full-size tables over the x side.
class ESDecomposition {
public:
    ESDecomposition(std::shared_ptr<const ProductSpace> space,
                    std::vector<std::vector<double>> components, std::vector<double> weights)
        : space_(std::move(space)), components_(std::move(components)),
          weights_(std::move(weights)) {}

    std::size_t n() const noexcept { return space_->n(); }
    const ProductSpace& space() const noexcept { return *space_; }
    std::size_t subset_count() const noexcept { return components_.size(); }
    std::span<const double> component(std::uint64_t mask) const { return components_.at(mask); }
    // atom weight of table point k under the x marginals
    double weight(std::uint64_t k) const noexcept { return weights_[k]; }

    // E[f_S^2]
    double norm_sq(std::uint64_t mask) const {
        const auto& c = components_.at(mask);
        KahanSum acc;
        for (std::size_t k = 0; k < c.size(); ++k) acc.add(weights_[k] * c[k] * c[k]);
        return acc.value();
    }

    // sum over nonempty S of E[f_S^2] = Var f
    double variance() const {
        KahanSum acc;
        for (std::uint64_t m = 1; m < components_.size(); ++m) acc.add(norm_sq(m));
        return acc.value();
    }

    // max over table points of |sum_S f_S - f|
    double reconstruction_residual(const FunctionTable& f) const {
        double worst = 0.0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            KahanSum acc;
            for (const auto& c : components_) acc.add(c[k]);
            worst = std::max(worst, std::abs(acc.value() - f.values()[k]));
        }
        return worst;
    }

    // max over S != T of |E[f_S f_T]|
    double orthogonality_residual() const {
        double worst = 0.0;
        for (std::uint64_t s = 0; s < components_.size(); ++s) {
            for (std::uint64_t t = s + 1; t < components_.size(); ++t) {
                KahanSum acc;
                for (std::size_t k = 0; k < weights_.size(); ++k) {
                    acc.add(weights_[k] * components_[s][k] * components_[t][k]);
                }
                worst = std::max(worst, std::abs(acc.value()));
            }
        }
        return worst;
    }

private:
    std::shared_ptr<const ProductSpace> space_;
    std::vector<std::vector<double>> components_;  // indexed by subset mask
    std::vector<double> weights_;
};

namespace detail {

// flat-index strides of the x side
inline std::vector<std::uint64_t> x_strides(const ProductSpace& space) {
    std::vector<std::uint64_t> st(space.n());
    std::uint64_t s = 1;
    for (std::size_t i = 0; i < space.n(); ++i) {
        st[i] = s;
        s *= space.pair(i).x_marginal().size();
    }
    return st;
}

}  // namespace detail

// Conditional expectations for every subset, then inclusion-exclusion over
// the subset lattice in place. Memory is 2^n tables of full size, so the
// budget check covers the product 2^n * table.
inline ESDecomposition decompose(const FunctionTable& f, std::uint64_t cap = enumeration_cap()) {
    const ProductSpace& space = f.space();
    const std::size_t n = space.n();
    if (n >= 26) throw capacity_error("decompose: too many coordinates for 2^n components");
    const std::uint64_t table = space.x_state_count();
    const std::uint64_t total = detail::saturating_mul(std::uint64_t{1} << n, table);
    if (total > cap) {
        throw capacity_error("decompose: 2^n * table = " + std::to_string(total) +
                             " exceeds cap " + std::to_string(cap));
    }

    const auto strides = detail::x_strides(space);
    const auto sizes = space.x_sizes();

    std::vector<double> weights(table);
    for_each_x_atom(space, [&](std::span<const std::size_t> idx, double p) {
        weights[f.flat_index(idx)] = p;
    }, std::numeric_limits<std::uint64_t>::max());

    std::vector<std::vector<double>> comp(std::uint64_t{1} << n);

    // E[f | X_T] for every T, expanded back to full-size tables
    for (std::uint64_t mask = 0; mask < comp.size(); ++mask) {
        std::vector<std::size_t> inside;  // coordinates in T
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) inside.push_back(i);
        }
        std::uint64_t bucket_count = 1;
        for (std::size_t i : inside) bucket_count *= sizes[i];
        std::vector<KahanSum> acc(bucket_count);
        std::vector<double> bucket_prob(bucket_count, 0.0);
        std::vector<std::size_t> idx(n, 0);
        for (std::uint64_t k = 0; k < table; ++k) {
            std::uint64_t b = 0, bs = 1;
            for (std::size_t i : inside) {
                b += idx[i] * bs;
                bs *= sizes[i];
            }
            acc[b].add(weights[k] * f.values()[k]);
            bucket_prob[b] += weights[k];
            for (std::size_t i = 0; i < n; ++i) {
                if (++idx[i] < sizes[i]) break;
                idx[i] = 0;
            }
        }
        std::vector<double> cond(bucket_count);
        for (std::uint64_t b = 0; b < bucket_count; ++b) {
            cond[b] = bucket_prob[b] > 0.0 ? acc[b].value() / bucket_prob[b] : 0.0;
        }
        comp[mask].resize(table);
        std::fill(idx.begin(), idx.end(), 0);
        for (std::uint64_t k = 0; k < table; ++k) {
            std::uint64_t b = 0, bs = 1;
            for (std::size_t i : inside) {
                b += idx[i] * bs;
                bs *= sizes[i];
            }
            comp[mask][k] = cond[b];
            for (std::size_t i = 0; i < n; ++i) {
                if (++idx[i] < sizes[i]) break;
                idx[i] = 0;
            }
        }
    }

    // Moebius over the subset lattice: comp[S] -= comp[S minus i] for each i,
    // turning conditional expectations into the orthogonal components.
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        for (std::uint64_t mask = 0; mask < comp.size(); ++mask) {
            if (!(mask & bit)) continue;
            auto& hi = comp[mask];
            const auto& lo = comp[mask ^ bit];
            for (std::uint64_t k = 0; k < table; ++k) hi[k] -= lo[k];
        }
    }

    return ESDecomposition(f.shared_space(), std::move(comp), std::move(weights));
}

// Per-degree cumulative mass: out[d] = sum_{1 <= |S| <= d} E[f_S^2].
inline std::vector<double> es_degree_mass(const ESDecomposition& dec) {
    std::vector<KahanSum> acc(dec.n() + 1);
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << dec.n()); ++m) {
        acc[std::popcount(m)].add(dec.norm_sq(m));
    }
    std::vector<double> out(dec.n() + 1, 0.0);
    double run = 0.0;
    for (std::size_t d = 1; d <= dec.n(); ++d) {
        run += acc[d].value();
        out[d] = run;
    }
    return out;
}

struct MarkovContractEntry {
    std::uint64_t mask = 0;
    double component_norm = 0.0;  // ||f_S||_2
    double image_norm = 0.0;      // ||T f_S||_2
    double factor = 0.0;          // prod_{i in S} maxcorr_i
    double slack = 0.0;           // factor * component_norm - image_norm
};

struct MarkovContractReport {
    std::vector<MarkovContractEntry> entries;
    double min_slack = 0.0;
    bool holds = false;  // min_slack >= -1e-9
};

// The product-space conditional-expectation operator contracts each
// component by the product of per-coordinate maximal correlations:
// ||T f_S||_2 <= (prod_{i in S} rho_i) ||f_S||_2.
inline MarkovContractReport markov_contract_check(const ESDecomposition& dec,
                                                  std::uint64_t cap = enumeration_cap()) {
    const ProductSpace& space = dec.space();
    const std::size_t n = space.n();
    std::vector<double> rho(n);
    for (std::size_t i = 0; i < n; ++i) rho[i] = maximal_correlation(space.pair(i));

    std::vector<std::uint64_t> ystrides(n);
    std::uint64_t ycount = 1;
    for (std::size_t i = 0; i < n; ++i) {
        ystrides[i] = ycount;
        ycount *= space.pair(i).y_marginal().size();
    }
    std::vector<double> yweights(ycount, 0.0);
    {
        std::vector<std::size_t> idx(n, 0);
        for (std::uint64_t k = 0; k < ycount; ++k) {
            double p = 1.0;
            for (std::size_t i = 0; i < n; ++i) p *= space.pair(i).y_marginal().probs()[idx[i]];
            yweights[k] = p;
            for (std::size_t i = 0; i < n; ++i) {
                if (++idx[i] < space.pair(i).y_marginal().size()) break;
                idx[i] = 0;
            }
        }
    }

    MarkovContractReport rep;
    rep.min_slack = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < dec.subset_count(); ++mask) {
        const auto comp = dec.component(mask);
        std::vector<KahanSum> img(ycount);  // E[f_S(X) ; Y = y]
        for_each_joint_atom(space, [&](std::span<const std::size_t> xi,
                                       std::span<const std::size_t> yi, double p) {
            std::uint64_t xflat = 0, yflat = 0, xs = 1;
            for (std::size_t i = 0; i < n; ++i) {
                xflat += xi[i] * xs;
                xs *= space.pair(i).x_marginal().size();
                yflat += yi[i] * ystrides[i];
            }
            img[yflat].add(p * comp[xflat]);
        }, cap);
        MarkovContractEntry e;
        e.mask = mask;
        e.component_norm = std::sqrt(std::max(0.0, dec.norm_sq(mask)));
        KahanSum nrm;
        for (std::uint64_t y = 0; y < ycount; ++y) {
            if (yweights[y] > 0.0) nrm.add(img[y].value() * img[y].value() / yweights[y]);
        }
        e.image_norm = std::sqrt(std::max(0.0, nrm.value()));
        e.factor = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) e.factor *= rho[i];
        }
        e.slack = e.factor * e.component_norm - e.image_norm;
        rep.min_slack = std::min(rep.min_slack, e.slack);
        rep.entries.push_back(e);
    }
    rep.holds = rep.min_slack >= -1e-9;
    return rep;
}

// Bridge to the multilinear expansion: over binary supports the component
// f_S equals fhat(S) times the standardized monomial, so E[f_S^2] = fhat^2.
inline double es_fourier_bridge_residual(const ESDecomposition& dec, const FourierExpansion& F) {
    if (dec.n() != F.n()) throw validation_error("bridge: mismatched coordinate counts");
    double worst = 0.0;
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << dec.n()); ++m) {
        const double c = F.coefficient(m);
        worst = std::max(worst, std::abs(dec.norm_sq(m) - c * c));
    }
    return worst;
}

}  // namespace hierstab
