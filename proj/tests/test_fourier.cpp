#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "oracles.hpp"

using namespace hierstab;

TEST_CASE("majority of three has the textbook coefficients") {
    const FunctionTable f = maj3_table();
    const FourierExpansion F = expand(f);
    for (std::uint64_t mask = 0; mask < 8; ++mask) {
        double expect = 0.0;
        if (mask == 1 || mask == 2 || mask == 4) expect = 0.5;
        if (mask == 7) expect = -0.5;
        CHECK(std::abs(F.coefficient(mask) - expect) < 1e-15);
        CHECK(std::abs(F.coefficient(mask) - orc::direct_coefficient(f, mask)) < 1e-12);
    }
    CHECK(F.mean() == 0.0);
    CHECK(F.variance() == Catch::Approx(1.0).margin(1e-12));
    CHECK(F.max_degree() == 3);
    CHECK(distance_to_lin(F) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("transform equals direct inner products on arbitrary cube tables") {
    RngStream rng(1, stream_salt::test_suite + 20);
    auto space = uniform_cube_space(6);
    std::vector<double> vals(64);
    for (double& v : vals) v = 2.0 * rng.next_unit() - 1.0;
    const FunctionTable f(space, std::move(vals));
    const FourierExpansion F = expand(f);
    for (std::uint64_t mask = 0; mask < 64; ++mask) {
        CHECK(std::abs(F.coefficient(mask) - orc::direct_coefficient(f, mask)) < 1e-12);
    }
    CHECK(orc::reconstruction_residual(f, F) < 1e-12);
}

TEST_CASE("parseval ties coefficient mass to table moments") {
    RngStream rng(2, stream_salt::test_suite + 21);
    for (int t = 0; t < 5; ++t) {
        const auto space = orc::random_resampling_space(rng, 3, 0.0);
        const auto syn = orc::random_multilinear(rng, space);
        const FourierExpansion F = expand(syn.table);
        CHECK(std::abs(F.total_mass() - syn.table.mass()) < 1e-10);
        CHECK(std::abs(F.variance() - syn.table.variance()) < 1e-10);
        const auto by_degree = F.degree_mass();
        KahanSum sum;
        for (double m : by_degree) sum.add(m);
        CHECK(std::abs(sum.value() - F.total_mass()) < 1e-12);
    }
}

TEST_CASE("expansion recovers synthesized coefficients over wide supports") {
    RngStream rng(3, stream_salt::test_suite + 22);
    for (int t = 0; t < 10; ++t) {
        const auto space = orc::random_resampling_space(rng, 3, 0.0);
        const auto syn = orc::random_multilinear(rng, space);
        const FourierExpansion F = expand(syn.table);
        for (std::uint64_t mask = 0; mask < 8; ++mask) {
            CHECK(std::abs(F.coefficient(mask) - syn.coefficients[mask]) < 1e-9);
        }
        CHECK(orc::reconstruction_residual(syn.table, F) < 1e-9);
    }
}

TEST_CASE("non-multilinear tables over wide supports are rejected") {
    const auto d = FiniteDistribution::uniform({-1.0, 0.0, 1.0});
    auto space = make_resampling_space(d, 1, 0.0);
    // x^2 has no multilinear representation in one coordinate
    const FunctionTable f(space, {1.0, 0.0, 1.0});
    CHECK_THROWS_AS(expand(f), not_multilinear_error);
    // affine tables pass
    const FunctionTable g(space, {-3.0, 1.0, 5.0});
    CHECK_NOTHROW(expand(g));
}

TEST_CASE("constant tables expand to a lone mean coefficient") {
    auto space = uniform_cube_space(3);
    const FunctionTable f(space, std::vector<double>(8, 2.5));
    const FourierExpansion F = expand(f);
    CHECK(F.coefficient(0) == Catch::Approx(2.5).margin(1e-15));
    CHECK(F.variance() < 1e-15);
    CHECK(f.essentially_constant());
    CHECK(distance_to_lin(F) == 0.0);
    CHECK(stability(F, 0.5) == 0.0);
}

TEST_CASE("stability formula matches joint enumeration on majority") {
    for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const FunctionTable f = maj3_table(rho);
        const double formula = stability(expand(f), rho);
        const double direct = orc::direct_stability(f);
        CHECK(std::abs(formula - direct) < 1e-12);
        // closed form for majority: 0.75 rho + 0.25 rho^3
        CHECK(std::abs(formula - (0.75 * rho + 0.25 * rho * rho * rho)) < 1e-12);
    }
    CHECK(stability(expand(maj3_table()), 0.5) == Catch::Approx(0.40625).margin(1e-12));
}

TEST_CASE("parity stability is the full power of rho") {
    const FunctionTable f = parity_table(8, 0.9);
    const double s = stability(expand(f), 0.9);
    CHECK(std::abs(s - std::pow(0.9, 8.0)) < 1e-12);
    CHECK(std::abs(s - orc::direct_stability(f)) < 1e-10);
    CHECK(distance_to_lin(expand(f)) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("stability accepts one correlation per coordinate") {
    RngStream rng(4, stream_salt::test_suite + 23);
    const std::vector<double> rhos = {0.1, 0.9, 0.5, 0.3};
    std::vector<FiniteDistribution> dists;
    for (int i = 0; i < 4; ++i) dists.push_back(orc::random_distribution(rng));
    std::vector<CorrelatedPair> flat_pairs;
    for (int i = 0; i < 4; ++i) {
        flat_pairs.push_back(make_resampling_coupling(dists[i], 0.0));
    }
    auto flat = std::make_shared<const ProductSpace>(ProductSpace(std::move(flat_pairs)));
    const auto syn = orc::random_multilinear(rng, flat);

    std::vector<CorrelatedPair> pairs;
    for (int i = 0; i < 4; ++i) pairs.push_back(make_resampling_coupling(dists[i], rhos[i]));
    auto coupled = std::make_shared<const ProductSpace>(ProductSpace(std::move(pairs)));
    const FunctionTable g(coupled, std::vector<double>(syn.table.values().begin(),
                                                       syn.table.values().end()));

    const double formula = stability(expand(g), rhos);
    CHECK(std::abs(formula - orc::direct_stability(g)) < 1e-9);

    CHECK_THROWS_AS(stability(expand(g), std::vector<double>{0.5}), validation_error);
    CHECK_THROWS_AS(stability(expand(g), std::vector<double>{0.5, 0.5, 0.5, 1.5}),
                    validation_error);
}

TEST_CASE("stability is monotone in rho") {
    RngStream rng(5, stream_salt::test_suite + 24);
    const auto space = uniform_cube_space(5);
    std::vector<double> vals(32);
    for (double& v : vals) v = 2.0 * rng.next_unit() - 1.0;
    const FourierExpansion F = expand(FunctionTable(space, std::move(vals)));
    double prev = stability(F, 0.0);
    CHECK(prev == 0.0);
    for (double rho : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        const double cur = stability(F, rho);
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
    CHECK(std::abs(prev - 1.0) < 1e-12);  // rho = 1 reproduces the function
}

TEST_CASE("one-level bound holds with the documented slack") {
    RngStream rng(6, stream_salt::test_suite + 25);
    for (int t = 0; t < 30; ++t) {
        const auto space = orc::random_resampling_space(rng, 4, 0.0);
        const auto syn = orc::random_multilinear(rng, space);
        const FourierExpansion F = expand(syn.table);
        for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto rep = check_stability_bound(F, rho);
            CHECK(rep.holds);
            CHECK(rep.slack >= -1e-9);
            CHECK(std::abs(rep.bound - ((1.0 - rep.epsilon) * rho + rep.epsilon * rho * rho)) <
                  1e-15);
        }
    }
    CHECK_THROWS_AS(check_stability_bound(expand(maj3_table()), 1.2), validation_error);
}

TEST_CASE("bound is tight for split mass on degrees one and two") {
    // f = sqrt(1-eps) x1 + sqrt(eps) x1 x2 meets the bound exactly
    const double eps = 0.37;
    auto space = uniform_cube_space(2);
    std::vector<double> vals(4);
    for (std::uint64_t m = 0; m < 4; ++m) {
        const double x1 = (m & 1u) ? 1.0 : -1.0;
        const double x2 = (m & 2u) ? 1.0 : -1.0;
        vals[m] = std::sqrt(1.0 - eps) * x1 + std::sqrt(eps) * x1 * x2;
    }
    const FourierExpansion F = expand(FunctionTable(space, std::move(vals)));
    for (double rho : {0.2, 0.5, 0.8}) {
        const auto rep = check_stability_bound(F, rho);
        CHECK(std::abs(rep.slack) < 1e-12);
        CHECK(rep.floor_applicable);
        CHECK(rep.floor_holds);
        CHECK(rep.floor_slack >= -1e-12);
        CHECK(std::abs(rep.floor_slack - eps * rho * rho) < 1e-12);
    }
}

TEST_CASE("degree cap activates the stability floor") {
    const FourierExpansion F = expand(maj3_table());
    const auto rep = check_stability_bound(F, 0.5);
    CHECK_FALSE(rep.floor_applicable);  // majority has a degree-3 term
    CHECK(rep.bound == Catch::Approx(0.4375).margin(1e-15));
    CHECK(rep.stability_value == Catch::Approx(0.40625).margin(1e-12));
}

TEST_CASE("low-degree correlation is bounded through stability") {
    const FourierExpansion F = expand(maj3_table());
    for (double rho : {0.25, 0.5, 0.75}) {
        for (std::size_t D : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
            const auto rep = check_low_degree_bound(F, D, rho);
            CHECK(rep.holds);
            CHECK(rep.slack >= -1e-9);
        }
    }
    // dictator meets the degree-one bound with equality
    const FourierExpansion D1 = expand(dictator_table(4));
    for (double rho : {0.25, 0.5, 0.75}) {
        const auto rep = check_low_degree_bound(D1, 1, rho);
        CHECK(std::abs(rep.slack) < 1e-9);
        CHECK(rep.correlation == Catch::Approx(1.0).margin(1e-12));
    }
    CHECK_THROWS_AS(check_low_degree_bound(F, 0, 0.5), validation_error);
    CHECK_THROWS_AS(check_low_degree_bound(F, 4, 0.5), validation_error);
    CHECK_THROWS_AS(check_low_degree_bound(F, 1, 0.0), validation_error);
    CHECK_THROWS_AS(check_low_degree_bound(F, 1, 1.0), validation_error);
}

TEST_CASE("table constructor validates shape and content") {
    auto space = uniform_cube_space(2);
    CHECK_THROWS_AS(FunctionTable(space, {1.0, 2.0}), validation_error);
    CHECK_THROWS_AS(FunctionTable(space, {1.0, 2.0, 3.0, std::nan("")}), validation_error);
    CHECK_THROWS_AS(FunctionTable(nullptr, {}), validation_error);
    const FunctionTable f(space, {1.0, 2.0, 3.0, 4.0});
    CHECK(f.depends_on(0));
    CHECK(f.depends_on(1));
    const FunctionTable g(space, {1.0, 1.0, 3.0, 3.0});
    CHECK_FALSE(g.depends_on(0));
    CHECK(g.depends_on(1));
}
