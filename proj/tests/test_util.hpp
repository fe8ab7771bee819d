#ifndef MUPOST_TEST_UTIL_HPP
#define MUPOST_TEST_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

// shared oracle helpers for the test suites (independent of the library
// implementations they check)

namespace testutil {

inline double mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
    double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v) { return std::sqrt(variance(v)); }

/// Kolmogorov-Smirnov statistic of samples against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf cdf) {
    std::sort(samples.begin(), samples.end());
    double n = static_cast<double>(samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = cdf(samples[i]);
        worst = std::max(worst, std::fabs(f - (i + 1) / n));
        worst = std::max(worst, std::fabs(f - i / n));
    }
    return worst;
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

inline double normal_pdf(double x, double mu = 0.0, double sigma = 1.0) {
    double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

struct TruncatedNormal {
    double mean = 0.0, sd = 0.0;
};

/// Moments of N(mu, sigma^2) truncated to [lo, hi].
inline TruncatedNormal truncated_normal_moments(double mu, double sigma, double lo, double hi) {
    double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
    double Z = normal_cdf(b) - normal_cdf(a);
    double pa = normal_pdf(a), pb = normal_pdf(b);
    double m = mu + sigma * (pa - pb) / Z;
    double var = sigma * sigma *
                 (1.0 + (a * pa - b * pb) / Z - ((pa - pb) / Z) * ((pa - pb) / Z));
    return {m, std::sqrt(std::max(0.0, var))};
}

} // namespace testutil

#endif
