#include "mupost/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mupost/errors.hpp"
#include "mupost/parallel.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {

using nlohmann::json;

struct SimVoxel {
    ParameterVector pv;
    SignalVector clean;
    SignalVector observed;
};

/// Ground truth and observed signal for voxel i. The noise stream is
/// separated from the parameter stream so different noise levels can share
/// truths.
SimVoxel simulate_voxel(const PriorSpec& spec, const HarnessContext& ctx, double snr,
                        uint64_t seed, std::size_t voxel, uint64_t noise_stream = 1) {
    SimVoxel v;
    Rng rng(seed, voxel * 4 + 0);
    v.pv.values.resize(spec.space.names.size());
    sample_prior_row(spec, rng, v.pv.values);
    rng.unit_vector(v.pv.orientation.data());
    v.clean = simulate_signal(spec.space, v.pv, ctx.protocol, ctx.sim_opts);
    v.observed = v.clean;
    if (snr > 0.0) {
        Rng noise_rng(splitmix64(seed ^ (0xabcd0000 + noise_stream)), voxel);
        add_noise_inplace(v.observed, snr, noise_rng);
    }
    return v;
}

std::vector<double> matrix_column(const Matrix& m, std::size_t j) {
    std::vector<double> col(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) col[i] = m(i, j);
    return col;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    if (j.empty()) return Matrix();
    Matrix m(j.size(), j.front().size());
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j2 = 0; j2 < m.cols; ++j2) m(i, j2) = j[i][j2].get<double>();
    return m;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double sab = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        sa += da * da;
        sb += db * db;
    }
    if (sa == 0.0 || sb == 0.0) return 0.0;
    return sab / std::sqrt(sa * sb);
}

} // namespace

ComparisonReport compare_with_mcmc(const FlowModel& flow, const PriorSpec& spec,
                                   const HarnessContext& ctx, std::size_t n_sims, double snr,
                                   int n_posterior_samples, const MCMCConfig& mcmc_config,
                                   uint64_t seed) {
    if (n_sims < 1) throw ValidationError("compare_with_mcmc: n_sims must be >= 1");
    const int d = spec.space.dim();
    ComparisonReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.snr = snr;
    rep.n_sims = n_sims;
    rep.n_posterior_samples = n_posterior_samples;
    rep.seed = seed;
    rep.param_names = spec.space.names;
    rep.truths = Matrix(n_sims, d);
    rep.flow_map = Matrix(n_sims, d);
    rep.mcmc_map = Matrix(n_sims, d);
    rep.flow_degenerate.assign(n_sims, 0);
    rep.mcmc_degenerate.assign(n_sims, 0);
    rep.flow_degenerate_counts.assign(d, 0);
    rep.mcmc_degenerate_counts.assign(d, 0);
    rep.flow_seconds.assign(n_sims, 0.0);
    rep.mcmc_seconds.assign(n_sims, 0.0);

    std::vector<std::vector<uint8_t>> flow_deg(n_sims), mcmc_deg(n_sims);

    parallel_for(n_sims, ctx.workers, [&](std::size_t i) {
        SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i);
        std::copy(voxel.pv.values.begin(), voxel.pv.values.end(), rep.truths.row(i));

        auto t0 = std::chrono::steady_clock::now();
        PosteriorSamples flow_post = rejection_sample(
            flow, voxel.observed, n_posterior_samples, spec, splitmix64(seed ^ (i * 2 + 1)));
        rep.flow_seconds[i] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        PosteriorSummary flow_sum = summarize(flow_post, ctx.summary_opts);

        MCMCConfig cfg = mcmc_config;
        cfg.rng_seed = splitmix64(seed ^ (i * 2 + 2));
        MCMCChain chain = run_amwg_dmri(voxel.observed, spec, ctx.protocol, cfg, ctx.sim_opts);
        rep.mcmc_seconds[i] = chain.seconds;
        PosteriorSamples mcmc_post;
        mcmc_post.samples = chain.trace;
        mcmc_post.space = spec.space;
        PosteriorSummary mcmc_sum = summarize(mcmc_post, ctx.summary_opts);

        flow_deg[i].assign(d, 0);
        mcmc_deg[i].assign(d, 0);
        for (int p = 0; p < d; ++p) {
            rep.flow_map(i, p) = flow_sum.params[p].map;
            rep.mcmc_map(i, p) = mcmc_sum.params[p].map;
            flow_deg[i][p] = flow_sum.params[p].degenerate ? 1 : 0;
            mcmc_deg[i][p] = mcmc_sum.params[p].degenerate ? 1 : 0;
        }
    });

    for (std::size_t i = 0; i < n_sims; ++i) {
        for (int p = 0; p < d; ++p) {
            rep.flow_degenerate_counts[p] += flow_deg[i][p];
            rep.mcmc_degenerate_counts[p] += mcmc_deg[i][p];
            rep.flow_degenerate[i] |= flow_deg[i][p];
            rep.mcmc_degenerate[i] |= mcmc_deg[i][p];
        }
    }
    rep.flow_mean_abs_bias.assign(d, 0.0);
    rep.mcmc_mean_abs_bias.assign(d, 0.0);
    for (std::size_t i = 0; i < n_sims; ++i)
        for (int p = 0; p < d; ++p) {
            rep.flow_mean_abs_bias[p] += std::fabs(rep.flow_map(i, p) - rep.truths(i, p));
            rep.mcmc_mean_abs_bias[p] += std::fabs(rep.mcmc_map(i, p) - rep.truths(i, p));
        }
    for (int p = 0; p < d; ++p) {
        rep.flow_mean_abs_bias[p] /= static_cast<double>(n_sims);
        rep.mcmc_mean_abs_bias[p] /= static_cast<double>(n_sims);
    }
    rep.flow_mean_seconds = std::accumulate(rep.flow_seconds.begin(), rep.flow_seconds.end(), 0.0) /
                            static_cast<double>(n_sims);
    rep.mcmc_mean_seconds = std::accumulate(rep.mcmc_seconds.begin(), rep.mcmc_seconds.end(), 0.0) /
                            static_cast<double>(n_sims);
    rep.speedup = rep.flow_mean_seconds > 0.0 ? rep.mcmc_mean_seconds / rep.flow_mean_seconds : 0.0;
    return rep;
}

CensusReport degeneracy_census(const FlowModel& flow, const PriorSpec& spec,
                               const HarnessContext& ctx, std::size_t n_sims, double snr,
                               int n_posterior_samples, uint64_t seed) {
    if (n_sims < 1) throw ValidationError("degeneracy_census: n_sims must be >= 1");
    const int d = spec.space.dim();
    CensusReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.snr = snr;
    rep.n_sims = n_sims;
    rep.n_posterior_samples = n_posterior_samples;
    rep.seed = seed;
    rep.param_names = spec.space.names;
    rep.degenerate_counts.assign(d, 0);

    std::vector<std::vector<uint8_t>> flags(n_sims);
    std::vector<double> sample_secs(n_sims, 0.0), summary_secs(n_sims, 0.0);
    parallel_for(n_sims, ctx.workers, [&](std::size_t i) {
        SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i);
        auto t0 = std::chrono::steady_clock::now();
        PosteriorSamples post = rejection_sample(flow, voxel.observed, n_posterior_samples, spec,
                                                 splitmix64(seed ^ (i * 3 + 1)));
        auto t1 = std::chrono::steady_clock::now();
        flags[i].assign(d, 0);
        for (int p = 0; p < d; ++p) {
            auto col = matrix_column(post.samples, p);
            DegeneracyResult res = detect_degeneracy(col, spec.space.lower[p], spec.space.upper[p],
                                                     ctx.summary_opts.degeneracy);
            flags[i][p] = res.degenerate ? 1 : 0;
        }
        auto t2 = std::chrono::steady_clock::now();
        sample_secs[i] = std::chrono::duration<double>(t1 - t0).count();
        summary_secs[i] = std::chrono::duration<double>(t2 - t1).count();
    });
    for (std::size_t i = 0; i < n_sims; ++i) {
        bool any = false;
        for (int p = 0; p < d; ++p) {
            rep.degenerate_counts[p] += flags[i][p];
            any = any || flags[i][p];
        }
        rep.degenerate_voxels += any ? 1 : 0;
    }
    rep.sampling_seconds = std::accumulate(sample_secs.begin(), sample_secs.end(), 0.0);
    rep.summary_seconds = std::accumulate(summary_secs.begin(), summary_secs.end(), 0.0);
    return rep;
}

FeatureComparisonReport compare_feature_extraction(const FlowModel& feature_flow,
                                                   const FlowModel& summary_flow,
                                                   const PriorSpec& spec,
                                                   const HarnessContext& ctx, std::size_t n_sims,
                                                   double snr, int n_posterior_samples,
                                                   uint64_t seed) {
    const int d = spec.space.dim();
    FeatureComparisonReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.snr = snr;
    rep.n_sims = n_sims;
    rep.n_posterior_samples = n_posterior_samples;
    rep.seed = seed;
    rep.param_names = spec.space.names;
    rep.truths = Matrix(n_sims, d);
    rep.feature_map = Matrix(n_sims, d);
    rep.summary_map = Matrix(n_sims, d);
    rep.feature_degenerate.assign(n_sims, 0);
    rep.summary_degenerate.assign(n_sims, 0);

    parallel_for(n_sims, ctx.workers, [&](std::size_t i) {
        SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i);
        std::copy(voxel.pv.values.begin(), voxel.pv.values.end(), rep.truths.row(i));
        std::vector<double> summary = shell_means(voxel.observed, ctx.protocol);

        PosteriorSamples post_f = rejection_sample(feature_flow, voxel.observed,
                                                   n_posterior_samples, spec,
                                                   splitmix64(seed ^ (i * 5 + 1)));
        PosteriorSummary sum_f = summarize(post_f, ctx.summary_opts);
        PosteriorSamples post_s = rejection_sample(summary_flow, summary, n_posterior_samples,
                                                   spec, splitmix64(seed ^ (i * 5 + 2)));
        PosteriorSummary sum_s = summarize(post_s, ctx.summary_opts);
        for (int p = 0; p < d; ++p) {
            rep.feature_map(i, p) = sum_f.params[p].map;
            rep.summary_map(i, p) = sum_s.params[p].map;
            if (sum_f.params[p].degenerate) rep.feature_degenerate[i] = 1;
            if (sum_s.params[p].degenerate) rep.summary_degenerate[i] = 1;
        }
    });

    rep.feature_rmse.assign(d, 0.0);
    rep.summary_rmse.assign(d, 0.0);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n_sims; ++i) {
        if (rep.feature_degenerate[i] || rep.summary_degenerate[i]) continue;
        ++kept;
        for (int p = 0; p < d; ++p) {
            double ef = rep.feature_map(i, p) - rep.truths(i, p);
            double es = rep.summary_map(i, p) - rep.truths(i, p);
            rep.feature_rmse[p] += ef * ef;
            rep.summary_rmse[p] += es * es;
        }
    }
    rep.n_kept = kept;
    for (int p = 0; p < d; ++p) {
        if (kept > 0) {
            rep.feature_rmse[p] = std::sqrt(rep.feature_rmse[p] / static_cast<double>(kept));
            rep.summary_rmse[p] = std::sqrt(rep.summary_rmse[p] / static_cast<double>(kept));
        }
    }
    return rep;
}

SnrSweepReport snr_sweep(const std::vector<const FlowModel*>& flows, const PriorSpec& spec,
                         const HarnessContext& ctx, const std::vector<double>& snr_levels,
                         std::size_t n_sims, int n_posterior_samples, uint64_t seed) {
    if (flows.size() != snr_levels.size())
        throw ValidationError("snr_sweep: one flow per noise level required");
    const int d = spec.space.dim();
    SnrSweepReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.n_sims = n_sims;
    rep.n_posterior_samples = n_posterior_samples;
    rep.seed = seed;
    rep.snr_levels = snr_levels;
    rep.param_names = spec.space.names;
    rep.uncertainty_pct.assign(flows.size(), Matrix(n_sims, d));

    for (std::size_t level = 0; level < flows.size(); ++level) {
        const FlowModel* flow = flows[level];
        double snr = snr_levels[level];
        parallel_for(n_sims, ctx.workers, [&](std::size_t i) {
            // identical parameter stream for every level, distinct noise
            SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i, 100 + level);
            PosteriorSamples post =
                rejection_sample(*flow, voxel.observed, n_posterior_samples, spec,
                                 splitmix64(seed ^ (level * 1000 + i * 7 + 3)));
            PosteriorSummary sum = summarize(post, ctx.summary_opts);
            for (int p = 0; p < d; ++p)
                rep.uncertainty_pct[level](i, p) = sum.params[p].uncertainty_pct;
        });
    }
    rep.mean_uncertainty.assign(flows.size(), std::vector<double>(d, 0.0));
    rep.overall_mean_uncertainty.assign(flows.size(), 0.0);
    for (std::size_t level = 0; level < flows.size(); ++level) {
        for (int p = 0; p < d; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n_sims; ++i) acc += rep.uncertainty_pct[level](i, p);
            rep.mean_uncertainty[level][p] = acc / static_cast<double>(n_sims);
            rep.overall_mean_uncertainty[level] += rep.mean_uncertainty[level][p];
        }
        rep.overall_mean_uncertainty[level] /= static_cast<double>(d);
    }
    return rep;
}

PpcReport posterior_predictive_check(const FlowModel& flow, const PriorSpec& spec,
                                     const HarnessContext& ctx, std::size_t n_truths,
                                     std::size_t n_pp, double snr, int n_posterior_samples,
                                     uint64_t seed) {
    if (n_pp < 1) throw ValidationError("ppc: n_pp must be >= 1");
    const auto& shells = ctx.protocol.shells();
    const std::size_t ns = shells.size();
    PpcReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.snr = snr;
    rep.n_truths = n_truths;
    rep.n_pp = n_pp;
    rep.n_posterior_samples = n_posterior_samples;
    rep.seed = seed;
    for (const auto& s : shells) rep.shell_bvalues.push_back(s.bvalue);
    rep.input_da = Matrix(n_truths, ns);
    rep.envelope_lo = Matrix(n_truths, ns);
    rep.envelope_hi = Matrix(n_truths, ns);

    parallel_for(n_truths, ctx.workers, [&](std::size_t i) {
        SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i);
        std::vector<double> da = shell_means(voxel.observed, ctx.protocol);
        std::copy(da.begin(), da.end(), rep.input_da.row(i));

        PosteriorSamples post = rejection_sample(flow, voxel.observed, n_posterior_samples, spec,
                                                 splitmix64(seed ^ (i * 11 + 5)));
        Rng orient_rng(splitmix64(seed ^ (i * 11 + 6)));
        for (std::size_t s = 0; s < ns; ++s) {
            rep.envelope_lo(i, s) = 1e300;
            rep.envelope_hi(i, s) = -1e300;
        }
        for (std::size_t k = 0; k < n_pp; ++k) {
            ParameterVector pv;
            pv.values.assign(post.samples.row(k), post.samples.row(k) + post.samples.cols);
            orient_rng.unit_vector(pv.orientation.data());
            SignalVector rec = simulate_signal(spec.space, pv, ctx.protocol, ctx.sim_opts);
            std::vector<double> rda = shell_means(rec, ctx.protocol);
            for (std::size_t s = 0; s < ns; ++s) {
                rep.envelope_lo(i, s) = std::min(rep.envelope_lo(i, s), rda[s]);
                rep.envelope_hi(i, s) = std::max(rep.envelope_hi(i, s), rda[s]);
            }
        }
    });

    std::size_t inside = 0;
    double width = 0.0;
    for (std::size_t i = 0; i < n_truths; ++i)
        for (std::size_t s = 0; s < ns; ++s) {
            if (rep.input_da(i, s) >= rep.envelope_lo(i, s) - 1e-12 &&
                rep.input_da(i, s) <= rep.envelope_hi(i, s) + 1e-12)
                ++inside;
            width += rep.envelope_hi(i, s) - rep.envelope_lo(i, s);
        }
    rep.coverage = static_cast<double>(inside) / static_cast<double>(n_truths * ns);
    rep.mean_width = width / static_cast<double>(n_truths * ns);
    return rep;
}

CorrelationReport feature_correlation(const FlowModel& flow, const PriorSpec& spec,
                                      const HarnessContext& ctx, std::size_t n_sims, double snr,
                                      uint64_t seed) {
    if (n_sims < 3) throw ValidationError("feature_correlation: n_sims must be >= 3");
    const auto& shells = ctx.protocol.shells();
    const std::size_t ns = shells.size();
    const std::size_t nf = static_cast<std::size_t>(flow.cond_dim());
    CorrelationReport rep;
    rep.model = model_id_name(spec.space.model);
    rep.snr = snr;
    rep.n_sims = n_sims;
    rep.seed = seed;
    for (const auto& s : shells) rep.shell_bvalues.push_back(s.bvalue);

    Matrix features(n_sims, nf), summaries(n_sims, ns);
    parallel_for(n_sims, ctx.workers, [&](std::size_t i) {
        SimVoxel voxel = simulate_voxel(spec, ctx, snr, seed, i);
        std::vector<double> f = flow.embed(voxel.observed);
        std::vector<double> s = shell_means(voxel.observed, ctx.protocol);
        std::copy(f.begin(), f.end(), features.row(i));
        std::copy(s.begin(), s.end(), summaries.row(i));
    });

    rep.correlation = Matrix(nf, ns);
    for (std::size_t f = 0; f < nf; ++f)
        for (std::size_t s = 0; s < ns; ++s)
            rep.correlation(f, s) = pearson(matrix_column(features, f), matrix_column(summaries, s));
    return rep;
}

// ---------------------------------------------------------------------------
// JSON round trips

namespace {

template <typename T>
json vec_json(const std::vector<T>& v) {
    return json(v);
}

} // namespace

std::string to_json_string(const ComparisonReport& r) {
    json j;
    j["kind"] = "comparison";
    j["model"] = r.model;
    j["snr"] = r.snr;
    j["n_sims"] = r.n_sims;
    j["n_posterior_samples"] = r.n_posterior_samples;
    j["seed"] = r.seed;
    j["param_names"] = r.param_names;
    j["truths"] = matrix_to_json(r.truths);
    j["flow_map"] = matrix_to_json(r.flow_map);
    j["mcmc_map"] = matrix_to_json(r.mcmc_map);
    j["flow_degenerate"] = vec_json(r.flow_degenerate);
    j["mcmc_degenerate"] = vec_json(r.mcmc_degenerate);
    j["flow_degenerate_counts"] = vec_json(r.flow_degenerate_counts);
    j["mcmc_degenerate_counts"] = vec_json(r.mcmc_degenerate_counts);
    j["flow_seconds"] = vec_json(r.flow_seconds);
    j["mcmc_seconds"] = vec_json(r.mcmc_seconds);
    j["flow_mean_abs_bias"] = vec_json(r.flow_mean_abs_bias);
    j["mcmc_mean_abs_bias"] = vec_json(r.mcmc_mean_abs_bias);
    j["flow_mean_seconds"] = r.flow_mean_seconds;
    j["mcmc_mean_seconds"] = r.mcmc_mean_seconds;
    j["speedup"] = r.speedup;
    return j.dump(2);
}

ComparisonReport comparison_report_from_json(const std::string& text) {
    json j = json::parse(text);
    ComparisonReport r;
    r.model = j.at("model").get<std::string>();
    r.snr = j.at("snr").get<double>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.n_posterior_samples = j.at("n_posterior_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.param_names = j.at("param_names").get<std::vector<std::string>>();
    r.truths = matrix_from_json(j.at("truths"));
    r.flow_map = matrix_from_json(j.at("flow_map"));
    r.mcmc_map = matrix_from_json(j.at("mcmc_map"));
    r.flow_degenerate = j.at("flow_degenerate").get<std::vector<uint8_t>>();
    r.mcmc_degenerate = j.at("mcmc_degenerate").get<std::vector<uint8_t>>();
    r.flow_degenerate_counts = j.at("flow_degenerate_counts").get<std::vector<long>>();
    r.mcmc_degenerate_counts = j.at("mcmc_degenerate_counts").get<std::vector<long>>();
    r.flow_seconds = j.at("flow_seconds").get<std::vector<double>>();
    r.mcmc_seconds = j.at("mcmc_seconds").get<std::vector<double>>();
    r.flow_mean_abs_bias = j.at("flow_mean_abs_bias").get<std::vector<double>>();
    r.mcmc_mean_abs_bias = j.at("mcmc_mean_abs_bias").get<std::vector<double>>();
    r.flow_mean_seconds = j.at("flow_mean_seconds").get<double>();
    r.mcmc_mean_seconds = j.at("mcmc_mean_seconds").get<double>();
    r.speedup = j.at("speedup").get<double>();
    return r;
}

std::string to_json_string(const CensusReport& r) {
    json j;
    j["kind"] = "census";
    j["model"] = r.model;
    j["snr"] = r.snr;
    j["n_sims"] = r.n_sims;
    j["n_posterior_samples"] = r.n_posterior_samples;
    j["seed"] = r.seed;
    j["param_names"] = r.param_names;
    j["degenerate_counts"] = vec_json(r.degenerate_counts);
    j["degenerate_voxels"] = r.degenerate_voxels;
    j["sampling_seconds"] = r.sampling_seconds;
    j["summary_seconds"] = r.summary_seconds;
    return j.dump(2);
}

CensusReport census_report_from_json(const std::string& text) {
    json j = json::parse(text);
    CensusReport r;
    r.model = j.at("model").get<std::string>();
    r.snr = j.at("snr").get<double>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.n_posterior_samples = j.at("n_posterior_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.param_names = j.at("param_names").get<std::vector<std::string>>();
    r.degenerate_counts = j.at("degenerate_counts").get<std::vector<long>>();
    r.degenerate_voxels = j.at("degenerate_voxels").get<long>();
    r.sampling_seconds = j.at("sampling_seconds").get<double>();
    r.summary_seconds = j.at("summary_seconds").get<double>();
    return r;
}

std::string to_json_string(const FeatureComparisonReport& r) {
    json j;
    j["kind"] = "feature_comparison";
    j["model"] = r.model;
    j["snr"] = r.snr;
    j["n_sims"] = r.n_sims;
    j["n_posterior_samples"] = r.n_posterior_samples;
    j["seed"] = r.seed;
    j["param_names"] = r.param_names;
    j["truths"] = matrix_to_json(r.truths);
    j["feature_map"] = matrix_to_json(r.feature_map);
    j["summary_map"] = matrix_to_json(r.summary_map);
    j["feature_degenerate"] = vec_json(r.feature_degenerate);
    j["summary_degenerate"] = vec_json(r.summary_degenerate);
    j["feature_rmse"] = vec_json(r.feature_rmse);
    j["summary_rmse"] = vec_json(r.summary_rmse);
    j["n_kept"] = r.n_kept;
    return j.dump(2);
}

FeatureComparisonReport feature_comparison_report_from_json(const std::string& text) {
    json j = json::parse(text);
    FeatureComparisonReport r;
    r.model = j.at("model").get<std::string>();
    r.snr = j.at("snr").get<double>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.n_posterior_samples = j.at("n_posterior_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.param_names = j.at("param_names").get<std::vector<std::string>>();
    r.truths = matrix_from_json(j.at("truths"));
    r.feature_map = matrix_from_json(j.at("feature_map"));
    r.summary_map = matrix_from_json(j.at("summary_map"));
    r.feature_degenerate = j.at("feature_degenerate").get<std::vector<uint8_t>>();
    r.summary_degenerate = j.at("summary_degenerate").get<std::vector<uint8_t>>();
    r.feature_rmse = j.at("feature_rmse").get<std::vector<double>>();
    r.summary_rmse = j.at("summary_rmse").get<std::vector<double>>();
    r.n_kept = j.at("n_kept").get<std::size_t>();
    return r;
}

std::string to_json_string(const SnrSweepReport& r) {
    json j;
    j["kind"] = "snr_sweep";
    j["model"] = r.model;
    j["n_sims"] = r.n_sims;
    j["n_posterior_samples"] = r.n_posterior_samples;
    j["seed"] = r.seed;
    j["snr_levels"] = r.snr_levels;
    j["param_names"] = r.param_names;
    json u = json::array();
    for (const auto& m : r.uncertainty_pct) u.push_back(matrix_to_json(m));
    j["uncertainty_pct"] = u;
    j["mean_uncertainty"] = r.mean_uncertainty;
    j["overall_mean_uncertainty"] = r.overall_mean_uncertainty;
    return j.dump(2);
}

SnrSweepReport snr_sweep_report_from_json(const std::string& text) {
    json j = json::parse(text);
    SnrSweepReport r;
    r.model = j.at("model").get<std::string>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.n_posterior_samples = j.at("n_posterior_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.snr_levels = j.at("snr_levels").get<std::vector<double>>();
    r.param_names = j.at("param_names").get<std::vector<std::string>>();
    for (const auto& m : j.at("uncertainty_pct")) r.uncertainty_pct.push_back(matrix_from_json(m));
    r.mean_uncertainty = j.at("mean_uncertainty").get<std::vector<std::vector<double>>>();
    r.overall_mean_uncertainty = j.at("overall_mean_uncertainty").get<std::vector<double>>();
    return r;
}

std::string to_json_string(const PpcReport& r) {
    json j;
    j["kind"] = "ppc";
    j["model"] = r.model;
    j["snr"] = r.snr;
    j["n_truths"] = r.n_truths;
    j["n_pp"] = r.n_pp;
    j["n_posterior_samples"] = r.n_posterior_samples;
    j["seed"] = r.seed;
    j["shell_bvalues"] = r.shell_bvalues;
    j["input_da"] = matrix_to_json(r.input_da);
    j["envelope_lo"] = matrix_to_json(r.envelope_lo);
    j["envelope_hi"] = matrix_to_json(r.envelope_hi);
    j["coverage"] = r.coverage;
    j["mean_width"] = r.mean_width;
    return j.dump(2);
}

PpcReport ppc_report_from_json(const std::string& text) {
    json j = json::parse(text);
    PpcReport r;
    r.model = j.at("model").get<std::string>();
    r.snr = j.at("snr").get<double>();
    r.n_truths = j.at("n_truths").get<std::size_t>();
    r.n_pp = j.at("n_pp").get<std::size_t>();
    r.n_posterior_samples = j.at("n_posterior_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.shell_bvalues = j.at("shell_bvalues").get<std::vector<double>>();
    r.input_da = matrix_from_json(j.at("input_da"));
    r.envelope_lo = matrix_from_json(j.at("envelope_lo"));
    r.envelope_hi = matrix_from_json(j.at("envelope_hi"));
    r.coverage = j.at("coverage").get<double>();
    r.mean_width = j.at("mean_width").get<double>();
    return r;
}

std::string to_json_string(const CorrelationReport& r) {
    json j;
    j["kind"] = "correlation";
    j["model"] = r.model;
    j["snr"] = r.snr;
    j["n_sims"] = r.n_sims;
    j["seed"] = r.seed;
    j["shell_bvalues"] = r.shell_bvalues;
    j["correlation"] = matrix_to_json(r.correlation);
    return j.dump(2);
}

CorrelationReport correlation_report_from_json(const std::string& text) {
    json j = json::parse(text);
    CorrelationReport r;
    r.model = j.at("model").get<std::string>();
    r.snr = j.at("snr").get<double>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.seed = j.at("seed").get<uint64_t>();
    r.shell_bvalues = j.at("shell_bvalues").get<std::vector<double>>();
    r.correlation = matrix_from_json(j.at("correlation"));
    return r;
}

} // namespace mupost
