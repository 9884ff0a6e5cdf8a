#include "catch_amalgamated.hpp"

#include <cmath>
#include <set>
#include <vector>

#include "latentfit/rng.hpp"

using latentfit::Rng;

TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c(42), d(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(c.gaussian() == d.gaussian());
}

TEST_CASE("different seeds and stream indices diverge") {
    Rng a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
    CHECK(equal == 0);

    std::set<std::uint64_t> firsts;
    for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(Rng::stream(7, i).next_u64());
    CHECK(firsts.size() == 1000);
    CHECK(Rng::stream(7, 3).next_u64() == Rng::stream(7, 3).next_u64());
}

TEST_CASE("splitmix64 reference values") {
    // First outputs of the reference splitmix64 generator seeded with 0.
    std::uint64_t state = 0;
    auto next = [&] {
        state += 0x9E3779B97F4A7C15ULL;
        return Rng::splitmix64(state - 0x9E3779B97F4A7C15ULL);
    };
    CHECK(next() == 0xE220A8397B1DCDAFULL);
    CHECK(next() == 0x6E789E6AA1B965F4ULL);
    CHECK(next() == 0x06C45D188009454FULL);
}

TEST_CASE("uniform draws stay in range") {
    Rng r(3);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = r.uniform(-2.0, 5.0);
        REQUIRE(v >= -2.0);
        REQUIRE(v < 5.0);
    }
}

TEST_CASE("below is unbiased over a small range") {
    Rng r(9);
    std::vector<int> counts(7, 0);
    const int n = 700000;
    for (int i = 0; i < n; ++i) {
        const auto k = r.below(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - n / 7) < 5 * std::sqrt(n / 7.0));
}

TEST_CASE("gaussian moments") {
    Rng r(11);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.gaussian();
        s += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
    CHECK(var == Catch::Approx(1.0).epsilon(0.005));
    CHECK(s4 / n == Catch::Approx(3.0).epsilon(0.02));
    Rng q(12);
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += q.gaussian(5.0, 2.0);
    CHECK(m / n == Catch::Approx(5.0).epsilon(0.002));
}
