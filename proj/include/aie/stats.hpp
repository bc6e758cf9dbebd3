#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace aie {

struct SampleSummary {
    std::size_t n = 0;
    double mean = 0.0;
    std::optional<double> sd;  // sample sd (n-1); absent for n < 2
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ci_level = 0.95;
    std::size_t bootstrap_reps = 2000;
    std::uint64_t seed = 0;
};

// percentile bootstrap over seeded resampling; deterministic given seed
SampleSummary summarize(const std::vector<double>& samples, double ci_level = 0.95,
                        std::size_t bootstrap_reps = 2000, std::uint64_t seed = 0);

// nullopt = undefined (zero variance in either argument)
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

// Pearson over average ranks (ties get the mean of their rank span)
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// Welch's t with Welch-Satterthwaite df; two-sided p from the Student-t CDF
// via the regularized incomplete beta function
WelchResult welch_t(const std::vector<double>& x, const std::vector<double>& y);

// regularized incomplete beta I_x(a, b), continued-fraction evaluation
double incomplete_beta(double a, double b, double x);

}  // namespace aie
