#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mupost/harness.hpp"
#include "mupost/rng.hpp"
#include "test_util.hpp"

using namespace mupost;

namespace {

AcquisitionProtocol small_protocol(int dirs_per_shell = 12) {
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
        for (int k = 0; k < dirs_per_shell; ++k) {
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

TrainingConfig quick_config(uint64_t seed, bool embedding = true) {
    TrainingConfig c;
    c.n_features = 6;
    c.made_hidden = 32;
    c.mlp_hidden1 = 64;
    c.mlp_hidden2 = 32;
    c.max_epochs = 12;
    c.patience_epochs = 12;
    c.use_embedding = embedding;
    c.rng_seed = seed;
    return c;
}

struct Fixture {
    AcquisitionProtocol protocol = small_protocol();
    PriorSpec spec = PriorSpec::for_model(ModelId::BallStick);
    HarnessContext ctx;
    FlowModel flow;

    Fixture() {
        ctx.protocol = protocol;
        ctx.sim_opts.quadrature_order = 24;
        ctx.workers = 1;
        TrainingSet set = generate_training_set(spec, protocol, 6000, 50.0, 11, ctx.sim_opts, 1);
        flow = train_flow(set.space, set.theta, set.x, quick_config(5), nullptr);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("compare_with_mcmc produces aligned maps, timings and a round-trippable report") {
    auto& f = fixture();
    MCMCConfig mc;
    mc.n_samples = 1700;
    mc.burn_in = 200;
    mc.sigma_noise = 0.02;
    mc.mle_starts = 6;
    mc.mle_max_iterations = 400;
    ComparisonReport rep = compare_with_mcmc(f.flow, f.spec, f.ctx, 3, 50.0, 1500, mc, 99);

    CHECK(rep.n_sims == 3);
    CHECK(rep.truths.rows == 3);
    CHECK(rep.flow_map.cols == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (int p = 0; p < 3; ++p) {
            CHECK(rep.flow_map(i, p) >= f.spec.space.lower[p]);
            CHECK(rep.flow_map(i, p) <= f.spec.space.upper[p]);
            CHECK(rep.mcmc_map(i, p) >= f.spec.space.lower[p]);
            CHECK(rep.mcmc_map(i, p) <= f.spec.space.upper[p]);
        }
    CHECK(rep.flow_mean_seconds > 0.0);
    CHECK(rep.mcmc_mean_seconds > 0.0);
    CHECK(rep.speedup > 0.0);

    std::string json = to_json_string(rep);
    ComparisonReport back = comparison_report_from_json(json);
    CHECK(to_json_string(back) == json);

    // determinism end to end
    ComparisonReport rep2 = compare_with_mcmc(f.flow, f.spec, f.ctx, 3, 50.0, 1500, mc, 99);
    CHECK(rep2.truths.data == rep.truths.data);
    CHECK(rep2.flow_map.data == rep.flow_map.data);
    CHECK(rep2.mcmc_map.data == rep.mcmc_map.data);
}

TEST_CASE("degeneracy census counts stay within bounds and reproduce") {
    auto& f = fixture();
    CensusReport rep = degeneracy_census(f.flow, f.spec, f.ctx, 5, 0.0, 1500, 7);
    CHECK(rep.n_sims == 5);
    REQUIRE(rep.degenerate_counts.size() == 3);
    for (long c : rep.degenerate_counts) {
        CHECK(c >= 0);
        CHECK(c <= 5);
    }
    CHECK(rep.degenerate_voxels <= 5);
    CensusReport rep2 = degeneracy_census(f.flow, f.spec, f.ctx, 5, 0.0, 1500, 7);
    CHECK(rep2.degenerate_counts == rep.degenerate_counts);
    std::string json = to_json_string(rep);
    CHECK(to_json_string(census_report_from_json(json)) == json);
}

TEST_CASE("feature comparison runs both variants on the same voxels") {
    auto& f = fixture();
    // summary-statistics variant: trained on shell means, no embedding
    TrainingSet set = generate_training_set(f.spec, f.protocol, 6000, 50.0, 11, f.ctx.sim_opts, 1);
    Matrix sm(set.x.rows, f.protocol.shells().size());
    std::vector<double> row(set.x.cols);
    for (std::size_t i = 0; i < set.x.rows; ++i) {
        std::copy(set.x.row(i), set.x.row(i) + set.x.cols, row.begin());
        auto means = shell_means(row, f.protocol);
        std::copy(means.begin(), means.end(), sm.row(i));
    }
    FlowModel summary_flow =
        train_flow(set.space, set.theta, sm, quick_config(6, false), nullptr);

    FeatureComparisonReport rep =
        compare_feature_extraction(f.flow, summary_flow, f.spec, f.ctx, 4, 0.0, 1500, 3);
    CHECK(rep.n_sims == 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (int p = 0; p < 3; ++p) {
            CHECK(rep.feature_map(i, p) >= f.spec.space.lower[p]);
            CHECK(rep.feature_map(i, p) <= f.spec.space.upper[p]);
            CHECK(rep.summary_map(i, p) >= f.spec.space.lower[p]);
            CHECK(rep.summary_map(i, p) <= f.spec.space.upper[p]);
        }
    for (int p = 0; p < 3; ++p) {
        CHECK(std::isfinite(rep.feature_rmse[p]));
        CHECK(std::isfinite(rep.summary_rmse[p]));
    }
    std::string json = to_json_string(rep);
    CHECK(to_json_string(feature_comparison_report_from_json(json)) == json);
}

TEST_CASE("snr sweep fills one uncertainty matrix per level") {
    auto& f = fixture();
    std::vector<const FlowModel*> flows = {&f.flow, &f.flow};
    std::vector<double> levels = {0.0, 50.0};
    SnrSweepReport rep = snr_sweep(flows, f.spec, f.ctx, levels, 4, 1500, 21);
    REQUIRE(rep.uncertainty_pct.size() == 2);
    for (const auto& m : rep.uncertainty_pct) {
        CHECK(m.rows == 4);
        CHECK(m.cols == 3);
        for (double v : m.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 100.0);
        }
    }
    std::string json = to_json_string(rep);
    CHECK(to_json_string(snr_sweep_report_from_json(json)) == json);
}

TEST_CASE("posterior predictive check envelopes contain their inputs' scale") {
    auto& f = fixture();
    PpcReport rep = posterior_predictive_check(f.flow, f.spec, f.ctx, 3, 20, 0.0, 1500, 17);
    CHECK(rep.input_da.rows == 3);
    CHECK(rep.input_da.cols == 6);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t s = 0; s < 6; ++s) CHECK(rep.envelope_lo(i, s) <= rep.envelope_hi(i, s));
    CHECK(rep.coverage >= 0.0);
    CHECK(rep.coverage <= 1.0);
    CHECK(rep.mean_width > 0.0);
    std::string json = to_json_string(rep);
    CHECK(to_json_string(ppc_report_from_json(json)) == json);
}

TEST_CASE("single-draw PPC envelope has zero width") {
    auto& f = fixture();
    PpcReport rep = posterior_predictive_check(f.flow, f.spec, f.ctx, 2, 1, 0.0, 1500, 19);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t s = 0; s < 6; ++s)
            CHECK(rep.envelope_lo(i, s) == rep.envelope_hi(i, s));
    CHECK(rep.mean_width == 0.0);
}

TEST_CASE("feature correlations stay in [-1, 1] with some feature only weakly correlated") {
    auto& f = fixture();
    CorrelationReport rep = feature_correlation(f.flow, f.spec, f.ctx, 200, 50.0, 23);
    CHECK(rep.correlation.rows == 6);
    CHECK(rep.correlation.cols == 6);
    for (double v : rep.correlation.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    // at least one learned feature carries information beyond the shell
    // means: its correlation against every shell mean stays below 0.7
    int weak_features = 0;
    for (std::size_t ft = 0; ft < rep.correlation.rows; ++ft) {
        double worst = 0.0;
        for (std::size_t s = 0; s < rep.correlation.cols; ++s)
            worst = std::max(worst, std::fabs(rep.correlation(ft, s)));
        if (worst < 0.7) ++weak_features;
    }
    CHECK(weak_features >= 1);
    std::string json = to_json_string(rep);
    CHECK(to_json_string(correlation_report_from_json(json)) == json);
}

TEST_CASE("an injected summary statistic correlates with itself at 1.0") {
    // single-direction shells make each shell mean equal one signal entry;
    // an identity (no-embedding) conditioner then reproduces the summary
    // statistic as a feature up to an affine map, so the Pearson
    // correlation must be exactly 1
    AcquisitionProtocol p = small_protocol(1);
    PriorSpec spec = PriorSpec::for_model(ModelId::BallStick);
    HarnessContext ctx;
    ctx.protocol = p;
    ctx.sim_opts.quadrature_order = 24;
    ctx.workers = 1;

    TrainingConfig cfg = quick_config(3, false);
    FlowModel identity_flow =
        FlowModel::create(spec.space, static_cast<int>(p.size()), cfg, cfg.rng_seed);
    CorrelationReport rep = feature_correlation(identity_flow, spec, ctx, 300, 50.0, 29);
    // feature index 3 + s is the signal entry of shell s (after 3 b0 rows)
    for (std::size_t s = 0; s < 6; ++s)
        CHECK(rep.correlation(3 + s, s) == doctest::Approx(1.0).epsilon(1e-9));
}
