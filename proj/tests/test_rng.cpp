#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "hierstab/rng.hpp"

using namespace hierstab;

// Published reference outputs for the counter-based generator (10 rounds,
// 4x32 lanes). Counter words pack little-endian into (ctr_lo, ctr_hi), key
// words into the 64-bit key.
TEST_CASE("philox known-answer vectors") {
    {
        const auto b = Philox4x32::generate(0, 0, 0);
        CHECK(b[0] == 0x6627e8d5u);
        CHECK(b[1] == 0xe169c58du);
        CHECK(b[2] == 0xbc57ac4cu);
        CHECK(b[3] == 0x9b00dbd8u);
    }
    {
        const std::uint64_t ff = ~std::uint64_t{0};
        const auto b = Philox4x32::generate(ff, ff, ff);
        CHECK(b[0] == 0x408f276du);
        CHECK(b[1] == 0x41c83b0eu);
        CHECK(b[2] == 0xa20bc7c6u);
        CHECK(b[3] == 0x6d5451fdu);
    }
    {
        // counter {243f6a88, 85a308d3, 13198a2e, 03707344}, key {a4093822, 299f31d0}
        const std::uint64_t ctr_lo = (std::uint64_t{0x85a308d3u} << 32) | 0x243f6a88u;
        const std::uint64_t ctr_hi = (std::uint64_t{0x03707344u} << 32) | 0x13198a2eu;
        const std::uint64_t key = (std::uint64_t{0x299f31d0u} << 32) | 0xa4093822u;
        const auto b = Philox4x32::generate(key, ctr_hi, ctr_lo);
        CHECK(b[0] == 0xd16cfe09u);
        CHECK(b[1] == 0x94fdccebu);
        CHECK(b[2] == 0x5001e420u);
        CHECK(b[3] == 0x24126ea1u);
    }
}

TEST_CASE("stream draws are reproducible and stream-separated") {
    RngStream a(42, stream_salt::test_suite);
    RngStream b(42, stream_salt::test_suite);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(42, stream_salt::test_suite + 1);
    RngStream d(43, stream_salt::test_suite);
    RngStream e(42, stream_salt::test_suite);
    bool differs_stream = false, differs_seed = false;
    for (int i = 0; i < 8; ++i) {
        const std::uint64_t base = e.next_u64();
        differs_stream = differs_stream || (c.next_u64() != base);
        differs_seed = differs_seed || (d.next_u64() != base);
    }
    CHECK(differs_stream);
    CHECK(differs_seed);
}

// Sequential units interleave two per block, so the even-position draws
// coincide with the random-access view at consecutive block indices.
TEST_CASE("random access matches the sequential stream") {
    RngStream s(7, stream_salt::test_suite);
    std::vector<double> units(20);
    for (double& u : units) u = s.next_unit();
    for (std::uint64_t k = 0; k < 10; ++k) {
        CHECK(units[2 * k] == RngStream::unit_at(7, stream_salt::test_suite, k));
    }
}

TEST_CASE("units stay in [0,1) and look uniform") {
    RngStream s(3, stream_salt::test_suite + 2);
    KahanSum mean;
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
        const double u = s.next_unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        mean.add(u);
    }
    // sd of the mean is 1/sqrt(12 N) ~ 0.0009; allow five of those
    CHECK(std::abs(mean.value() / N - 0.5) < 0.005);
}

TEST_CASE("fixed-point fractions are exact at the edges") {
    CHECK(dyadic_fraction(0.0) == 0);
    CHECK(dyadic_fraction(-1.0) == 0);
    CHECK(dyadic_fraction(1.0) == ~std::uint64_t{0});
    CHECK(dyadic_fraction(2.0) == ~std::uint64_t{0});
    CHECK(dyadic_fraction(0.5) == std::uint64_t{1} << 63);
    CHECK(dyadic_fraction(0.25) == std::uint64_t{1} << 62);
    CHECK(dyadic_fraction(std::ldexp(1.0, -64)) == 1);
}

TEST_CASE("bernoulli masks honor the degenerate endpoints exactly") {
    RngStream s(11, stream_salt::test_suite + 3);
    for (int i = 0; i < 50; ++i) {
        CHECK(bernoulli_mask(~std::uint64_t{0}, s) == ~std::uint64_t{0});
        CHECK(bernoulli_mask(0, s) == 0);
    }
}

TEST_CASE("bernoulli masks hit the requested density") {
    RngStream s(11, stream_salt::test_suite + 4);
    const std::uint64_t p25 = dyadic_fraction(0.25);
    std::int64_t ones = 0;
    const int words = 4000;
    for (int i = 0; i < words; ++i) ones += std::popcount(bernoulli_mask(p25, s));
    const double n = 64.0 * words;
    const double frac = static_cast<double>(ones) / n;
    // five sigmas of a Bernoulli(0.25) mean over 256000 bits
    CHECK(std::abs(frac - 0.25) < 5.0 * std::sqrt(0.25 * 0.75 / n));
}

TEST_CASE("compensated sums keep tiny increments") {
    KahanSum acc;
    acc.add(1.0);
    for (int i = 0; i < 1000000; ++i) acc.add(1e-16);
    // a plain double sum would still be exactly 1.0 here
    CHECK(std::abs(acc.value() - (1.0 + 1e-10)) < 1e-13);

    KahanSum tenth;
    for (int i = 0; i < 10000000; ++i) tenth.add(0.1);
    CHECK(std::abs(tenth.value() - 1e6) < 1e-7);
}

TEST_CASE("gaussian draws have standard moments") {
    RngStream s(5, stream_salt::test_suite + 5);
    KahanSum m1, m2;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double g = s.next_gaussian();
        m1.add(g);
        m2.add(g * g);
    }
    CHECK(std::abs(m1.value() / N) < 5.0 / std::sqrt(static_cast<double>(N)));
    CHECK(std::abs(m2.value() / N - 1.0) < 5.0 * std::sqrt(2.0 / N));
}
