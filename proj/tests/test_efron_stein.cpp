#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "oracles.hpp"

using namespace hierstab;

namespace {

// random table over the full x side of a space
FunctionTable random_table(RngStream& rng, std::shared_ptr<const ProductSpace> space) {
    std::vector<double> vals(space->x_state_count());
    for (double& v : vals) v = 4.0 * rng.next_unit() - 2.0;
    return FunctionTable(std::move(space), std::move(vals));
}

// apply a coordinate permutation to a space and a table: new coordinate j
// is old coordinate perm[j], values reindexed to match
std::pair<std::shared_ptr<const ProductSpace>, std::vector<double>> permuted(
    const FunctionTable& f, const std::vector<std::size_t>& perm) {
    const ProductSpace& space = f.space();
    const std::size_t n = space.n();
    std::vector<CorrelatedPair> pairs;
    for (std::size_t j = 0; j < n; ++j) pairs.push_back(space.pair(perm[j]));
    auto new_space = std::make_shared<const ProductSpace>(ProductSpace(std::move(pairs)));

    std::vector<double> vals(new_space->x_state_count());
    std::vector<std::size_t> old_idx(n);
    for_each_x_atom(*new_space, [&](std::span<const std::size_t> idx, double) {
        for (std::size_t j = 0; j < n; ++j) old_idx[perm[j]] = idx[j];
        std::uint64_t flat = 0, stride = 1;
        for (std::size_t j = 0; j < n; ++j) {
            flat += idx[j] * stride;
            stride *= new_space->pair(j).x_marginal().size();
        }
        vals[flat] = f.at(old_idx);
    });
    return {new_space, std::move(vals)};
}

std::uint64_t map_mask(std::uint64_t mask, const std::vector<std::size_t>& perm) {
    std::uint64_t out = 0;
    for (std::size_t j = 0; j < perm.size(); ++j) {
        if ((mask >> perm[j]) & 1u) out |= std::uint64_t{1} << j;
    }
    return out;
}

}  // namespace

TEST_CASE("decomposition reconstructs, stays orthogonal, and splits variance") {
    RngStream rng(1, stream_salt::test_suite + 30);
    for (int t = 0; t < 10; ++t) {
        const auto space = orc::random_resampling_space(rng, 3, 0.35);
        const FunctionTable f = random_table(rng, space);
        const ESDecomposition dec = decompose(f);
        CHECK(dec.reconstruction_residual(f) < 1e-10);
        CHECK(dec.orthogonality_residual() < 1e-12);
        CHECK(std::abs(dec.variance() - f.variance()) < 1e-10);
        // the empty component is the constant mean
        const auto c0 = dec.component(0);
        for (double v : c0) CHECK(std::abs(v - f.mean()) < 1e-12);
    }
}

TEST_CASE("components vanish conditionally outside their own block") {
    RngStream rng(2, stream_salt::test_suite + 31);
    const auto space = orc::random_resampling_space(rng, 3, 0.0);
    const FunctionTable f = random_table(rng, space);
    const ESDecomposition dec = decompose(f);
    for (std::uint64_t s = 1; s < 8; ++s) {
        for (std::uint64_t t = 0; t < 8; ++t) {
            if ((s & ~t) == 0) continue;  // S inside T: no vanishing claim
            CHECK(orc::worst_conditional_mean(*space, dec.component(s), t) < 1e-10);
        }
    }
}

TEST_CASE("decomposition is linear in the function") {
    RngStream rng(3, stream_salt::test_suite + 32);
    const auto space = orc::random_resampling_space(rng, 3, 0.0);
    const FunctionTable f = random_table(rng, space);
    const FunctionTable g = random_table(rng, space);
    std::vector<double> mix(f.values().size());
    for (std::size_t k = 0; k < mix.size(); ++k) {
        mix[k] = 2.0 * f.values()[k] - 0.5 * g.values()[k];
    }
    const FunctionTable h(space, std::move(mix));
    const auto df = decompose(f), dg = decompose(g), dh = decompose(h);
    for (std::uint64_t m = 0; m < 8; ++m) {
        const auto cf = df.component(m);
        const auto cg = dg.component(m);
        const auto ch = dh.component(m);
        for (std::size_t k = 0; k < ch.size(); ++k) {
            CHECK(std::abs(ch[k] - (2.0 * cf[k] - 0.5 * cg[k])) < 1e-10);
        }
    }
}

TEST_CASE("component norms are equivariant under coordinate permutations") {
    RngStream rng(4, stream_salt::test_suite + 33);
    for (int t = 0; t < 10; ++t) {
        const auto space = orc::random_resampling_space(rng, 3, 0.2);
        const FunctionTable f = random_table(rng, space);
        std::vector<std::size_t> perm = {0, 1, 2};
        for (std::size_t j = 2; j > 0; --j) {
            std::swap(perm[j], perm[rng.next_u64() % (j + 1)]);
        }
        auto [pspace, pvals] = permuted(f, perm);
        const FunctionTable pf(pspace, std::move(pvals));
        const auto dec = decompose(f);
        const auto pdec = decompose(pf);
        for (std::uint64_t m = 0; m < 8; ++m) {
            CHECK(std::abs(dec.norm_sq(m) - pdec.norm_sq(map_mask(m, perm))) < 1e-10);
        }
    }
}

TEST_CASE("binary supports bridge to the multilinear expansion") {
    RngStream rng(5, stream_salt::test_suite + 34);
    auto space = uniform_cube_space(4);
    const FunctionTable f = random_table(rng, space);
    const ESDecomposition dec = decompose(f);
    const FourierExpansion F = expand(f);
    CHECK(es_fourier_bridge_residual(dec, F) < 1e-12);

    // per-point: the component is the coefficient times the monomial
    for (std::uint64_t m = 0; m < 16; ++m) {
        const auto comp = dec.component(m);
        for (std::uint64_t k = 0; k < 16; ++k) {
            double chi = 1.0;
            for (std::size_t i = 0; i < 4; ++i) {
                if ((m >> i) & 1u) chi *= ((k >> i) & 1u) ? 1.0 : -1.0;
            }
            CHECK(std::abs(comp[k] - F.coefficient(m) * chi) < 1e-12);
        }
    }
}

TEST_CASE("cumulative degree mass matches the componentwise tally") {
    RngStream rng(6, stream_salt::test_suite + 35);
    const auto space = orc::random_resampling_space(rng, 3, 0.0);
    const FunctionTable f = random_table(rng, space);
    const ESDecomposition dec = decompose(f);
    const auto cum = es_degree_mass(dec);
    REQUIRE(cum.size() == 4);
    CHECK(cum[0] == 0.0);
    double direct = 0.0;
    for (std::size_t d = 1; d <= 3; ++d) {
        for (std::uint64_t m = 1; m < 8; ++m) {
            if (static_cast<std::size_t>(std::popcount(m)) == d) direct += dec.norm_sq(m);
        }
        CHECK(std::abs(cum[d] - direct) < 1e-12);
    }
    CHECK(std::abs(cum[3] - f.variance()) < 1e-10);
}

TEST_CASE("conditional-expectation operator contracts each component sharply") {
    RngStream rng(7, stream_salt::test_suite + 36);
    for (double rho : {0.0, 0.45, 0.8, 1.0}) {
        const auto space = orc::random_resampling_space(rng, 3, rho);
        const FunctionTable f = random_table(rng, space);
        const auto rep = markov_contract_check(decompose(f));
        CHECK(rep.holds);
        CHECK(rep.min_slack >= -1e-9);
        for (const auto& e : rep.entries) {
            // resampling couplings realize the contraction with equality
            CHECK(std::abs(e.slack) < 1e-9);
            CHECK(std::abs(e.factor - std::pow(rho, std::popcount(e.mask))) < 1e-9);
        }
    }
}

TEST_CASE("contraction holds for arbitrary explicit couplings") {
    RngStream rng(8, stream_salt::test_suite + 37);
    for (int t = 0; t < 10; ++t) {
        std::vector<CorrelatedPair> pairs;
        for (int i = 0; i < 2; ++i) pairs.push_back(orc::random_explicit_pair(rng));
        auto space = std::make_shared<const ProductSpace>(ProductSpace(std::move(pairs)));
        const FunctionTable f = random_table(rng, space);
        const auto rep = markov_contract_check(decompose(f));
        CHECK(rep.holds);
        CHECK(rep.min_slack >= -1e-9);
    }
}

TEST_CASE("decompose refuses oversized requests") {
    auto space = uniform_cube_space(10);
    const FunctionTable f(space, std::vector<double>(1024, 1.0));
    CHECK_THROWS_AS(decompose(f, 100), capacity_error);  // 2^10 tables of 2^10 entries
    CHECK_NOTHROW(decompose(f));
}
