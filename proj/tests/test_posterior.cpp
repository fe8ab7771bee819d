#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mupost/errors.hpp"
#include "mupost/posterior.hpp"
#include "mupost/rng.hpp"
#include "test_util.hpp"

using namespace mupost;

namespace {

std::vector<double> gaussian_samples(double mu, double sigma, std::size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = mu + sigma * rng.normal();
    return out;
}

std::vector<double> mixture_samples(double m1, double s1, double m2, double s2, std::size_t n,
                                    uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) {
        if (rng.uniform() < 0.5)
            v = m1 + s1 * rng.normal();
        else
            v = m2 + s2 * rng.normal();
    }
    return out;
}

/// Brute-force uncertainty oracle: exact per-sample KDE with reflection,
/// top half by density, IQR relative to the range.
double uncertainty_oracle(const std::vector<double>& samples, double lo, double hi,
                          double bandwidth) {
    double range = hi - lo;
    std::vector<double> t(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        t[i] = std::clamp((samples[i] - lo) / range, 0.0, 1.0);
    double h = bandwidth / range;
    auto dens = [&](double v) {
        double acc = 0.0;
        for (double u : t) {
            for (double uu : {u, -u, 2.0 - u}) {
                double z = (v - uu) / h;
                acc += std::exp(-0.5 * z * z);
            }
        }
        return acc;
    };
    std::vector<double> d(samples.size());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = dens(t[i]);
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d[a] > d[b]; });
    std::size_t keep = (t.size() + 1) / 2;
    std::vector<double> top;
    for (std::size_t i = 0; i < keep; ++i) top.push_back(samples[idx[i]]);
    std::sort(top.begin(), top.end());
    auto quant = [&](double p) {
        double hh = p * (top.size() - 1);
        std::size_t k = static_cast<std::size_t>(hh);
        if (k + 1 >= top.size()) return top.back();
        return top[k] + (hh - k) * (top[k + 1] - top[k]);
    };
    return 100.0 * (quant(0.75) - quant(0.25)) / range;
}

} // namespace

TEST_CASE("gaussian samples give the analytic FWHM ambiguity") {
    auto s = gaussian_samples(0.5, 0.1, 20000, 42);
    ParameterSummary sum = summarize_marginal(s, 0.0, 1.0);
    double expected = 100.0 * 2.0 * std::sqrt(2.0 * std::log(2.0)) * 0.1; // 23.55
    CHECK(std::fabs(sum.ambiguity_pct - expected) < 1.5);
    CHECK(std::fabs(sum.map - 0.5) < 0.02);
    CHECK_FALSE(sum.degenerate);
}

TEST_CASE("near-delta posterior has vanishing spread measures") {
    Rng rng(9);
    std::vector<double> s(5000);
    for (auto& v : s) v = 0.5 + 1e-6 * rng.normal();
    ParameterSummary sum = summarize_marginal(s, 0.0, 1.0);
    CHECK(sum.uncertainty_pct < 0.5);
    CHECK(sum.ambiguity_pct < 0.5);
    CHECK(std::fabs(sum.map - 0.5) < 0.005);
}

TEST_CASE("uncertainty agrees with a brute-force re-implementation") {
    auto s = gaussian_samples(0.5, 0.1, 3000, 11);
    SummaryOptions opts;
    opts.bandwidth = 0.02; // pin the bandwidth so both sides use the same kernel
    ParameterSummary sum = summarize_marginal(s, 0.0, 1.0, opts);
    double oracle = uncertainty_oracle(s, 0.0, 1.0, 0.02);
    CHECK(std::fabs(sum.uncertainty_pct - oracle) < 0.5);
}

TEST_CASE("metrics are affine-equivariant") {
    auto s = gaussian_samples(0.4, 0.07, 4000, 13);
    SummaryOptions opts;
    opts.bandwidth = 0.015;
    ParameterSummary base = summarize_marginal(s, 0.0, 1.0, opts);

    for (double a : {3.5, -2.0}) {
        double b = 1.25;
        std::vector<double> mapped(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) mapped[i] = a * s[i] + b;
        double lo = a > 0 ? a * 0.0 + b : a * 1.0 + b;
        double hi = a > 0 ? a * 1.0 + b : a * 0.0 + b;
        SummaryOptions mopts;
        mopts.bandwidth = std::fabs(a) * 0.015;
        ParameterSummary m = summarize_marginal(mapped, lo, hi, mopts);
        CHECK(std::fabs(m.uncertainty_pct - base.uncertainty_pct) < 1e-9);
        CHECK(std::fabs(m.ambiguity_pct - base.ambiguity_pct) < 1e-9);
        CHECK(std::fabs(m.map - (a * base.map + b)) < 1e-9 * std::max(1.0, std::fabs(a)));
    }
}

TEST_CASE("ambiguity does not decrease when dispersion grows") {
    auto s = gaussian_samples(0.5, 0.05, 8000, 17);
    double m = testutil::mean(s);
    ParameterSummary base = summarize_marginal(s, 0.0, 1.0);
    for (double c : {1.5, 2.0, 3.0}) {
        std::vector<double> scaled(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            scaled[i] = std::clamp(m + c * (s[i] - m), 0.0, 1.0);
        ParameterSummary wide = summarize_marginal(scaled, 0.0, 1.0);
        CHECK(wide.ambiguity_pct >= base.ambiguity_pct - 1e-9);
        base = wide;
    }
}

TEST_CASE("duplication invariance holds with a pinned bandwidth") {
    auto s = gaussian_samples(0.6, 0.08, 3000, 23);
    SummaryOptions opts;
    opts.bandwidth = 0.02;
    ParameterSummary once = summarize_marginal(s, 0.0, 1.0, opts);
    std::vector<double> twice = s;
    twice.insert(twice.end(), s.begin(), s.end());
    ParameterSummary doubled = summarize_marginal(twice, 0.0, 1.0, opts);
    CHECK(std::fabs(once.uncertainty_pct - doubled.uncertainty_pct) < 1e-9);
    CHECK(std::fabs(once.ambiguity_pct - doubled.ambiguity_pct) < 1e-9);
    CHECK(std::fabs(once.map - doubled.map) < 1e-12);
}

TEST_CASE("degeneracy: unimodal marginal is not flagged") {
    auto s = gaussian_samples(0.5, 0.05, 10000, 29);
    DegeneracyResult res = detect_degeneracy(s, 0.0, 1.0);
    CHECK_FALSE(res.degenerate);
}

TEST_CASE("degeneracy: well-separated modes are flagged with a faithful fit") {
    auto s = mixture_samples(0.2, 0.03, 0.8, 0.03, 20000, 31);
    DegeneracyResult res = detect_degeneracy(s, 0.0, 1.0);
    CHECK(res.degenerate);
    double lo_mean = std::min(res.fit.mean1, res.fit.mean2);
    double hi_mean = std::max(res.fit.mean1, res.fit.mean2);
    CHECK(std::fabs(lo_mean - 0.2) < 0.03);
    CHECK(std::fabs(hi_mean - 0.8) < 0.03);
    CHECK(std::fabs(res.fit.std1 - 0.03) < 0.015);
    CHECK(std::fabs(res.fit.std2 - 0.03) < 0.015);
    // construction satisfies both criteria: the separation exceeds the
    // summed deviations and the analytic mixture has two maxima
    CHECK(hi_mean - lo_mean > res.fit.std1 + res.fit.std2);
}

TEST_CASE("degeneracy: heavily overlapping modes merge into one maximum") {
    auto s = mixture_samples(0.45, 0.2, 0.55, 0.2, 20000, 37);
    DegeneracyResult res = detect_degeneracy(s, 0.0, 1.0);
    CHECK_FALSE(res.degenerate);
}

TEST_CASE("degeneracy detection ignores sample order") {
    auto s = mixture_samples(0.25, 0.04, 0.75, 0.04, 5000, 41);
    DegeneracyResult a = detect_degeneracy(s, 0.0, 1.0);
    Rng rng(43);
    for (std::size_t i = s.size() - 1; i > 0; --i)
        std::swap(s[i], s[rng.uniform_index(i + 1)]);
    DegeneracyResult b = detect_degeneracy(s, 0.0, 1.0);
    CHECK(a.degenerate == b.degenerate);
    CHECK(a.fit.mean1 == doctest::Approx(b.fit.mean1).epsilon(1e-12));
    CHECK(a.fit.log_likelihood == doctest::Approx(b.fit.log_likelihood).epsilon(1e-12));
}

TEST_CASE("degeneracy needs at least 1000 samples") {
    auto s = gaussian_samples(0.5, 0.1, 500, 47);
    CHECK_THROWS_AS(detect_degeneracy(s, 0.0, 1.0), ValidationError);
}

TEST_CASE("rejection sampling: half-in-support flow accepts about half") {
    // identity-initialized flow samples N(0,1); a [0, 10] box keeps z >= 0
    ParameterSpace space = ParameterSpace::custom({"t"}, {0.0}, {10.0});
    TrainingConfig cfg;
    cfg.n_features = 2;
    cfg.made_hidden = 8;
    cfg.mlp_hidden1 = 8;
    cfg.mlp_hidden2 = 8;
    FlowModel flow = FlowModel::create(space, 2, cfg, 3);
    PriorSpec spec = PriorSpec::for_space(space);
    std::vector<double> x = {0.0, 0.0};
    PosteriorSamples post = rejection_sample(flow, x, 10000, spec, 5);
    CHECK(post.samples.rows == 10000);
    CHECK(std::fabs(post.accepted_fraction - 0.5) < 0.02);
    for (std::size_t i = 0; i < post.samples.rows; ++i)
        CHECK(in_support(spec, post.samples.row_span(i)));
}

TEST_CASE("rejection sampling: in-support flow accepts everything") {
    ParameterSpace space = ParameterSpace::custom({"t"}, {-50.0}, {50.0});
    TrainingConfig cfg;
    cfg.n_features = 2;
    cfg.made_hidden = 8;
    cfg.mlp_hidden1 = 8;
    cfg.mlp_hidden2 = 8;
    FlowModel flow = FlowModel::create(space, 2, cfg, 3);
    PriorSpec spec = PriorSpec::for_space(space);
    std::vector<double> x = {0.0, 0.0};
    PosteriorSamples post = rejection_sample(flow, x, 5000, spec, 5);
    CHECK(post.accepted_fraction == 1.0);
}

TEST_CASE("rejection sampling: no overlap raises a low-acceptance error") {
    ParameterSpace space = ParameterSpace::custom({"t"}, {20.0}, {30.0});
    TrainingConfig cfg;
    cfg.n_features = 2;
    cfg.made_hidden = 8;
    cfg.mlp_hidden1 = 8;
    cfg.mlp_hidden2 = 8;
    FlowModel flow = FlowModel::create(space, 2, cfg, 3);
    PriorSpec spec = PriorSpec::for_space(space);
    std::vector<double> x = {0.0, 0.0};
    CHECK_THROWS_AS(rejection_sample(flow, x, 1000, spec, 5), LowAcceptanceError);
}

TEST_CASE("summarize covers every parameter of a sample matrix") {
    PosteriorSamples post;
    post.space = ParameterSpace::custom({"a", "b"}, {0.0, 0.0}, {1.0, 2.0});
    post.samples = Matrix(5000, 2);
    Rng rng(3);
    for (std::size_t i = 0; i < post.samples.rows; ++i) {
        post.samples(i, 0) = std::clamp(0.3 + 0.05 * rng.normal(), 0.0, 1.0);
        post.samples(i, 1) = std::clamp(1.5 + 0.2 * rng.normal(), 0.0, 2.0);
    }
    PosteriorSummary sum = summarize(post);
    REQUIRE(sum.params.size() == 2);
    CHECK(std::fabs(sum.params[0].map - 0.3) < 0.02);
    CHECK(std::fabs(sum.params[1].map - 1.5) < 0.05);
}
