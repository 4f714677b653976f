#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "floodcpf/common.hpp"
#include "floodcpf/rng.hpp"

using namespace floodcpf;

TEST_CASE("splitmix64 reference values") {
    // First outputs for state 0, from the reference implementation.
    u64 s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
    CHECK(splitmix64(s) == 0x06c45d188009454fULL);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("abc", 3) == 0xe71fa2190541574bULL);
}

TEST_CASE("same seed reproduces, different seed diverges") {
    Rng a(42), b(42), c(43);
    bool all_eq = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const u64 va = a.next_u64();
        all_eq = all_eq && va == b.next_u64();
        any_diff = any_diff || va != c.next_u64();
    }
    CHECK(all_eq);
    CHECK(any_diff);
}

TEST_CASE("split streams are decorrelated and stable") {
    Rng root(7);
    Rng s1 = root.split(1);
    Rng s1b = Rng(7).split(1);
    Rng s2 = root.split(2);
    int agree12 = 0;
    for (int i = 0; i < 64; ++i) {
        const u64 v1 = s1.next_u64();
        CHECK(v1 == s1b.next_u64());
        if (v1 == s2.next_u64()) ++agree12;
    }
    CHECK(agree12 == 0);
}

TEST_CASE("uniform stays in range with sane mean") {
    Rng rng(123);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.uniform();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        sum += v;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("uniform_int covers all residues without bias") {
    Rng rng(9);
    int counts[7] = {};
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const i64 v = rng.uniform_int(7);
        REQUIRE(v >= 0);
        REQUIRE(v < 7);
        ++counts[v];
    }
    for (int c : counts) CHECK(std::abs(c - n / 7) < 600);
}

TEST_CASE("normal moments") {
    Rng rng(31);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gamma moments match shape parameter") {
    Rng rng(57);
    for (double shape : {1.0, 2.5, 6.0}) {
        const int n = 200000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double v = rng.gamma(shape);
            REQUIRE(v > 0.0);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n;
        const double var = s2 / n - mean * mean;
        CHECK(std::abs(mean - shape) < 0.05 * shape);
        CHECK(std::abs(var - shape) < 0.08 * shape);
    }
}

TEST_CASE("speckle has unit mean and 1/looks variance") {
    Rng rng(88);
    for (int looks : {1, 4}) {
        const int n = 200000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double v = rng.speckle(looks);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n;
        const double var = s2 / n - mean * mean;
        CHECK(std::abs(mean - 1.0) < 0.02);
        CHECK(std::abs(var - 1.0 / looks) < 0.05);
    }
}
