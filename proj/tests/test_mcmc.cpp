#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mupost/errors.hpp"
#include "mupost/mcmc.hpp"
#include "mupost/rng.hpp"
#include "test_util.hpp"

using namespace mupost;

namespace {

AcquisitionProtocol tiny_protocol() {
    std::vector<GradientEntry> entries;
    for (int i = 0; i < 3; ++i) {
        GradientEntry e;
        e.bvalue = 0.0;
        e.delta_small = 7.0;
        e.delta_big = 24.0;
        entries.push_back(e);
    }
    Rng rng(4);
    for (double b : {0.2, 0.5, 1.2, 2.4, 4.0, 6.0}) {
        for (int k = 0; k < 12; ++k) {
            GradientEntry e;
            e.bvalue = b;
            rng.unit_vector(e.direction.data());
            e.delta_small = 7.0;
            e.delta_big = 24.0;
            entries.push_back(e);
        }
    }
    return AcquisitionProtocol(std::move(entries));
}

/// Monte-Carlo standard error via batch means.
double batch_se(const std::vector<double>& v, int n_batches = 50) {
    std::size_t per = v.size() / n_batches;
    std::vector<double> means;
    for (int b = 0; b < n_batches; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) acc += v[b * per + i];
        means.push_back(acc / static_cast<double>(per));
    }
    return testutil::stddev(means) / std::sqrt(static_cast<double>(n_batches));
}

SamplerTarget gaussian_target(double mu, double sigma) {
    SamplerTarget t;
    t.lower = {0.0};
    t.upper = {1.0};
    t.log_density = [mu, sigma](std::span<const double> q) {
        double z = (q[0] - mu) / sigma;
        return -0.5 * z * z;
    };
    return t;
}

} // namespace

TEST_CASE("offset gaussian log-likelihood: zero residual gives the constant") {
    double sigma = 0.05;
    std::vector<double> model = {0.9, 0.5, 0.1};
    std::vector<double> x(3);
    for (int i = 0; i < 3; ++i) x[i] = std::sqrt(model[i] * model[i] + sigma * sigma);
    double v = log_likelihood_offset_gaussian(x, model, sigma);
    CHECK(v == doctest::Approx(-3.0 * std::log(sigma * std::sqrt(2.0 * M_PI))).epsilon(1e-12));
}

TEST_CASE("offset gaussian log-likelihood: hand-evaluated single measurement") {
    std::vector<double> x = {1.0}, model = {1.0};
    double sigma = 0.02;
    double v = log_likelihood_offset_gaussian(x, model, sigma);
    double expected = -std::pow(1.0 - std::sqrt(1.0 + sigma * sigma), 2) / (2 * sigma * sigma) -
                      std::log(sigma * std::sqrt(2.0 * M_PI));
    CHECK(v == doctest::Approx(expected).epsilon(1e-12));
    CHECK(v == doctest::Approx(2.9930345).epsilon(1e-6));
}

TEST_CASE("offset gaussian: doubling sigma shifts the constant by -m log 2") {
    double sigma = 0.05;
    std::vector<double> model = {0.8, 0.3};
    std::vector<double> x1(2), x2(2);
    for (int i = 0; i < 2; ++i) {
        x1[i] = std::sqrt(model[i] * model[i] + sigma * sigma);
        x2[i] = std::sqrt(model[i] * model[i] + 4.0 * sigma * sigma);
    }
    double a = log_likelihood_offset_gaussian(x1, model, sigma);
    double b = log_likelihood_offset_gaussian(x2, model, 2.0 * sigma);
    CHECK(b - a == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("AMWG reproduces a known 1-D Gaussian: mean, std and KS") {
    SamplerTarget target = gaussian_target(0.3, 0.05);
    MCMCConfig cfg;
    cfg.n_samples = 15200;
    cfg.burn_in = 200;
    cfg.rng_seed = 7;
    std::vector<double> init = {0.3};
    MCMCChain chain = run_amwg(target, init, cfg);
    REQUIRE(chain.trace.rows == 15000);

    std::vector<double> v(chain.trace.rows);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = chain.trace(i, 0);
    double se = batch_se(v);
    CHECK(std::fabs(testutil::mean(v) - 0.3) < 3.0 * se);
    CHECK(std::fabs(testutil::stddev(v) - 0.05) / 0.05 < 0.05);

    double ks = testutil::ks_statistic(v, [](double q) { return testutil::normal_cdf(q, 0.3, 0.05); });
    CHECK(ks < 0.02);

    // every retained draw respects the box
    for (double q : v) {
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
    }
}

TEST_CASE("AMWG adaptation settles near the target acceptance") {
    SamplerTarget target = gaussian_target(0.5, 0.1);
    MCMCConfig cfg;
    cfg.n_samples = 12000;
    cfg.burn_in = 200;
    cfg.rng_seed = 3;
    MCMCChain chain = run_amwg(target, std::vector<double>{0.5}, cfg);
    CHECK(chain.acceptance_rates[0] > 0.2);
    CHECK(chain.acceptance_rates[0] < 0.6);
}

TEST_CASE("thinned and unthinned chains agree in expectation") {
    SamplerTarget target = gaussian_target(0.4, 0.08);
    MCMCConfig cfg;
    cfg.n_samples = 15200;
    cfg.burn_in = 200;
    cfg.rng_seed = 11;
    MCMCChain plain = run_amwg(target, std::vector<double>{0.4}, cfg);
    cfg.thinning = 5;
    cfg.rng_seed = 12;
    MCMCChain thinned = run_amwg(target, std::vector<double>{0.4}, cfg);

    std::vector<double> a(plain.trace.rows), b(thinned.trace.rows);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = plain.trace(i, 0);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = thinned.trace(i, 0);
    CHECK(b.size() == 3000);
    double se = std::sqrt(std::pow(batch_se(a), 2) + std::pow(batch_se(b, 30), 2));
    CHECK(std::fabs(testutil::mean(a) - testutil::mean(b)) < 3.0 * se);
}

TEST_CASE("forced rejection keeps the chain at its start") {
    std::vector<double> init = {0.5};
    SamplerTarget target;
    target.lower = {0.0};
    target.upper = {1.0};
    target.log_density = [init](std::span<const double> q) {
        // only the exact starting point has mass: every proposal is rejected
        return std::fabs(q[0] - init[0]) < 1e-12 ? 0.0 : -1e300;
    };
    MCMCConfig cfg;
    cfg.n_samples = 1;
    cfg.burn_in = 0;
    cfg.rng_seed = 5;
    MCMCChain chain = run_amwg(target, init, cfg);
    REQUIRE(chain.trace.rows == 1);
    CHECK(chain.trace(0, 0) == 0.5);
    CHECK(chain.mle_init[0] == 0.5);
}

TEST_CASE("MLE init recovers noise-free ball-stick parameters") {
    AcquisitionProtocol p = tiny_protocol();
    PriorSpec spec = PriorSpec::for_model(ModelId::BallStick);
    ParameterVector truth;
    truth.values = {0.55, 2.2, 0.9};
    Rng rng(8);
    rng.unit_vector(truth.orientation.data());
    SignalVector x = signal_ball_stick(truth, p);

    ParameterVector fit = mle_init(x, spec, p, 0.02, 17);
    for (int i = 0; i < 3; ++i) {
        double range = spec.space.upper[i] - spec.space.lower[i];
        CHECK(std::fabs(fit.values[i] - truth.values[i]) / range < 0.05);
    }
    // the stick direction is recovered up to sign
    double dot = 0.0;
    for (int k = 0; k < 3; ++k) dot += fit.orientation[k] * truth.orientation[k];
    CHECK(std::fabs(dot) > 0.99);
}

TEST_CASE("MLE init is deterministic and never crashes on flat data") {
    AcquisitionProtocol p = tiny_protocol();
    PriorSpec spec = PriorSpec::for_model(ModelId::BallStick);
    SignalVector ones(p.size(), 1.0);
    ParameterVector a = mle_init(ones, spec, p, 0.02, 4);
    ParameterVector b = mle_init(ones, spec, p, 0.02, 4);
    CHECK(in_support(spec, a.values));
    CHECK(a.values == b.values);
}

TEST_CASE("full ball-stick chain at SNR 50 mixes with sane acceptance") {
    AcquisitionProtocol p = tiny_protocol();
    PriorSpec spec = PriorSpec::for_model(ModelId::BallStick);
    ParameterVector truth;
    truth.values = {0.4, 1.8, 1.1};
    Rng rng(10);
    rng.unit_vector(truth.orientation.data());
    SignalVector clean = signal_ball_stick(truth, p);
    SignalVector x = add_noise(clean, 50.0, NoiseMode::Rician, 12);

    MCMCConfig cfg;
    cfg.n_samples = 3000;
    cfg.burn_in = 200;
    cfg.sigma_noise = 0.02;
    cfg.rng_seed = 13;
    MCMCChain chain = run_amwg_dmri(x, spec, p, cfg);
    REQUIRE(chain.trace.rows == 2800);
    REQUIRE(chain.trace.cols == 3); // orientation coordinates are dropped
    for (std::size_t i = 0; i < chain.trace.rows; ++i)
        CHECK(in_support(spec, chain.trace.row_span(i)));
    for (int c = 0; c < 3; ++c) {
        CHECK(chain.acceptance_rates[c] > 0.2);
        CHECK(chain.acceptance_rates[c] < 0.6);
    }
    CHECK(chain.seconds > 0.0);

    // posterior mass concentrates near the truth for the signal fraction
    std::vector<double> f(chain.trace.rows);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = chain.trace(i, 0);
    CHECK(std::fabs(testutil::mean(f) - truth.values[0]) < 0.1);
}
