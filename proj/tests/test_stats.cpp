#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "aie/errors.hpp"
#include "aie/stats.hpp"

using namespace aie;

namespace {

// independent average-rank assignment for the spearman oracle
std::vector<double> ranks_oracle(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

TEST_CASE("pearson worked value") {
    const auto r = pearson({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0});
    REQUIRE(r.has_value());
    CHECK(std::abs(*r - 0.5) <= 1e-12);
}

TEST_CASE("pearson detects perfect linear relationships") {
    const std::vector<double> x = {1.0, 2.0, 5.0, 9.0};
    std::vector<double> up, down;
    for (double v : x) {
        up.push_back(3.0 * v + 7.0);
        down.push_back(-2.0 * v + 1.0);
    }
    CHECK(*pearson(x, up) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*pearson(x, down) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson is symmetric and scale invariant") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x, y, y_scaled;
        for (int j = 0; j < 8; ++j) {
            x.push_back(val(rng));
            y.push_back(val(rng));
        }
        for (double v : y) y_scaled.push_back(4.0 * v + 2.0);
        const auto xy = pearson(x, y);
        const auto yx = pearson(y, x);
        REQUIRE(xy.has_value());
        CHECK(std::abs(*xy - *yx) <= 1e-12);
        CHECK(std::abs(*pearson(x, y_scaled) - *xy) <= 1e-12);
        CHECK(*xy >= -1.0 - 1e-12);
        CHECK(*xy <= 1.0 + 1e-12);
    }
}

TEST_CASE("pearson is undefined for zero variance") {
    CHECK_FALSE(pearson({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}).has_value());
    CHECK_FALSE(pearson({1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}).has_value());
}

TEST_CASE("pearson input validation") {
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {1.0}), LengthMismatch);
    CHECK_THROWS_AS(pearson({1.0}, {1.0}), TooFewPoints);
}

TEST_CASE("spearman rewards monotone relationships regardless of shape") {
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> cubed;
    for (double v : x) cubed.push_back(v * v * v);
    CHECK(*spearman(x, cubed) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*spearman({1.0, 2.0, 3.0, 4.0}, {4.0, 3.0, 2.0, 1.0}) ==
          doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spearman averages tied ranks") {
    // x = (1, 2, 2, 3) ranks as (1, 2.5, 2.5, 4)
    const std::vector<double> with_ties = {1.0, 2.0, 2.0, 3.0};
    CHECK(ranks_oracle(with_ties) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(*spearman(with_ties, with_ties) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937 rng(83);
    std::uniform_int_distribution<int> small(0, 3);  // duplicates are likely
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x, y;
        for (int j = 0; j < 7; ++j) {
            x.push_back(static_cast<double>(small(rng)));
            y.push_back(static_cast<double>(small(rng)));
        }
        const auto got = spearman(x, y);
        const auto want = pearson(ranks_oracle(x), ranks_oracle(y));
        REQUIRE(got.has_value() == want.has_value());
        if (got) CHECK(std::abs(*got - *want) <= 1e-12);
    }
}

TEST_CASE("spearman is undefined when one side is constant") {
    CHECK_FALSE(spearman({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}).has_value());
    CHECK_THROWS_AS(spearman({1.0}, {1.0}), TooFewPoints);
    CHECK_THROWS_AS(spearman({1.0, 2.0}, {1.0, 2.0, 3.0}), LengthMismatch);
}

TEST_CASE("welch t of a sample against itself accepts the null") {
    const std::vector<double> x = {0.4, 0.9, 1.3, 0.7, 1.1};
    const WelchResult r = welch_t(x, x);
    CHECK(r.t == 0.0);
    CHECK(std::abs(r.p - 1.0) <= 1e-9);
}

TEST_CASE("welch t worked value") {
    // equal variances, shifted mean: t = -1, df = 8
    const WelchResult r = welch_t({1.0, 2.0, 3.0, 4.0, 5.0}, {2.0, 3.0, 4.0, 5.0, 6.0});
    CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.3465935).epsilon(1e-4));
}

TEST_CASE("welch t direction flips with argument order") {
    const std::vector<double> x = {1.0, 2.0, 3.0};
    const std::vector<double> y = {4.0, 5.0, 7.0};
    const WelchResult xy = welch_t(x, y);
    const WelchResult yx = welch_t(y, x);
    CHECK(xy.t == doctest::Approx(-yx.t).epsilon(1e-12));
    CHECK(xy.p == doctest::Approx(yx.p).epsilon(1e-12));
    CHECK(xy.t < 0.0);
    CHECK(xy.p < 0.05);  // clearly separated samples
}

TEST_CASE("welch t degenerate variance handling") {
    const WelchResult same = welch_t({2.0, 2.0, 2.0}, {2.0, 2.0});
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);
    CHECK(same.df == 3.0);
    CHECK_THROWS_AS(welch_t({2.0, 2.0}, {3.0, 3.0}), ZeroVarianceBoth);
    CHECK_THROWS_AS(welch_t({1.0}, {2.0, 3.0}), TooFewPoints);
}

TEST_CASE("incomplete beta endpoints and closed forms") {
    CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b
    for (double x : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-8));
        CHECK(incomplete_beta(3.0, 1.0, x) == doctest::Approx(x * x * x).epsilon(1e-8));
        CHECK(incomplete_beta(1.0, 2.0, x) ==
              doctest::Approx(1.0 - (1.0 - x) * (1.0 - x)).epsilon(1e-8));
        // symmetry of the regularized form
        CHECK(incomplete_beta(2.0, 5.0, x) ==
              doctest::Approx(1.0 - incomplete_beta(5.0, 2.0, 1.0 - x)).epsilon(1e-7));
    }
    CHECK(incomplete_beta(4.0, 4.0, 0.5) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("summarize reports exact moments") {
    const SampleSummary s = summarize({1.0, 2.0, 3.0, 4.0}, 0.95, 500, 0);
    CHECK(s.n == 4);
    CHECK(s.mean == 2.5);
    REQUIRE(s.sd.has_value());
    // sample variance (n-1): (2.25 + 0.25 + 0.25 + 2.25) / 3
    CHECK(*s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(s.ci_low <= s.ci_high);
    CHECK(s.ci_level == 0.95);
    CHECK(s.bootstrap_reps == 500);
}

TEST_CASE("single sample has no sd") {
    const SampleSummary s = summarize({0.7});
    CHECK(s.n == 1);
    CHECK(s.mean == 0.7);
    CHECK_FALSE(s.sd.has_value());
    CHECK(s.ci_low == 0.7);
    CHECK(s.ci_high == 0.7);
}

TEST_CASE("bootstrap interval is deterministic for a fixed seed") {
    const std::vector<double> samples = {0.61, 0.55, 0.72, 0.68, 0.59, 0.63, 0.70};
    const SampleSummary a = summarize(samples, 0.95, 2000, 0);
    const SampleSummary b = summarize(samples, 0.95, 2000, 0);
    CHECK(a.ci_low == b.ci_low);    // bitwise, not approximate
    CHECK(a.ci_high == b.ci_high);
    CHECK(a.ci_low <= a.mean);
    CHECK(a.ci_high >= a.mean);

    const SampleSummary other = summarize(samples, 0.95, 2000, 1);
    CHECK((other.ci_low != a.ci_low || other.ci_high != a.ci_high));
}

TEST_CASE("constant samples collapse the interval") {
    const SampleSummary s = summarize({0.5, 0.5, 0.5});
    CHECK(s.mean == 0.5);
    CHECK(*s.sd == 0.0);
    CHECK(s.ci_low == 0.5);
    CHECK(s.ci_high == 0.5);
}

TEST_CASE("wider confidence level widens or keeps the interval") {
    const std::vector<double> samples = {0.2, 0.9, 0.4, 0.7, 0.5, 0.1, 0.8, 0.3};
    const SampleSummary narrow = summarize(samples, 0.80, 2000, 0);
    const SampleSummary wide = summarize(samples, 0.99, 2000, 0);
    CHECK(wide.ci_low <= narrow.ci_low);
    CHECK(wide.ci_high >= narrow.ci_high);
}

TEST_CASE("summarize rejects an empty sample") {
    CHECK_THROWS_AS(summarize({}), EmptySample);
}
