#include "aie/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aie/errors.hpp"

namespace aie {

namespace {

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs, double mean) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(xs.size() - 1);
}

// average ranks, ties receive the mean of their rank span
std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

SampleSummary summarize(const std::vector<double>& samples, double ci_level,
                        std::size_t bootstrap_reps, std::uint64_t seed) {
    if (samples.empty()) throw EmptySample("summarize needs at least one sample");
    SampleSummary summary;
    summary.n = samples.size();
    summary.mean = mean_of(samples);
    if (samples.size() >= 2) summary.sd = std::sqrt(sample_variance(samples, summary.mean));
    summary.ci_level = ci_level;
    summary.bootstrap_reps = bootstrap_reps;
    summary.seed = seed;

    // modulo draw instead of uniform_int_distribution: the latter is
    // implementation-defined and would break cross-toolchain determinism
    std::mt19937_64 rng(seed);
    const std::size_t n = samples.size();
    std::vector<double> means;
    means.reserve(bootstrap_reps);
    for (std::size_t rep = 0; rep < bootstrap_reps; ++rep) {
        double total = 0.0;
        for (std::size_t draw = 0; draw < n; ++draw) total += samples[rng() % n];
        means.push_back(total / static_cast<double>(n));
    }
    std::sort(means.begin(), means.end());
    const double alpha = 1.0 - ci_level;
    const std::size_t reps = means.size();
    std::size_t lo = static_cast<std::size_t>(std::floor(alpha / 2.0 * static_cast<double>(reps)));
    std::size_t hi =
        static_cast<std::size_t>(std::ceil((1.0 - alpha / 2.0) * static_cast<double>(reps)));
    lo = std::min(lo, reps - 1);
    hi = hi == 0 ? 0 : std::min(hi - 1, reps - 1);
    summary.ci_low = means[lo];
    summary.ci_high = means[hi];
    return summary;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw LengthMismatch("pearson over lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()));
    if (x.size() < 2) throw TooFewPoints("pearson needs at least two points");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw LengthMismatch("spearman over lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()));
    if (x.size() < 2) throw TooFewPoints("spearman needs at least two points");
    return pearson(average_ranks(x), average_ranks(y));
}

namespace {

constexpr double kBetaTolerance = 1e-8;

// continued fraction for the incomplete beta (modified Lentz)
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 500;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kBetaTolerance) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

WelchResult welch_t(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || y.size() < 2) throw TooFewPoints("welch t needs two samples of n >= 2");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    const double vx = sample_variance(x, mx);
    const double vy = sample_variance(y, my);
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());

    if (vx == 0.0 && vy == 0.0) {
        if (mx != my)
            throw ZeroVarianceBoth("both samples have zero variance and different means");
        return {0.0, nx + ny - 2.0, 1.0};
    }

    const double se2 = vx / nx + vy / ny;
    const double t = (mx - my) / std::sqrt(se2);
    const double df =
        se2 * se2 / ((vx / nx) * (vx / nx) / (nx - 1.0) + (vy / ny) * (vy / ny) / (ny - 1.0));
    const double p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return {t, df, std::min(1.0, std::max(0.0, p))};
}

}  // namespace aie
