#ifndef MUPOST_HARNESS_HPP
#define MUPOST_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mupost/flow.hpp"
#include "mupost/forward_models.hpp"
#include "mupost/mcmc.hpp"
#include "mupost/posterior.hpp"

namespace mupost {

/// Shared run parameters for the validation experiments. All experiments
/// are seed-deterministic end to end; voxels are processed with a bounded
/// worker pool and per-voxel derived seeds.
struct HarnessContext {
    AcquisitionProtocol protocol;
    SimulatorOptions sim_opts;
    SummaryOptions summary_opts;
    int workers = 0;
};

/// Head-to-head posterior comparison on simulated voxels: MAP bias per
/// parameter for the flow and for the MCMC baseline, plus wall-clock.
struct ComparisonReport {
    std::string model;
    double snr = 0.0;
    std::size_t n_sims = 0;
    int n_posterior_samples = 0;
    uint64_t seed = 0;
    std::vector<std::string> param_names;
    Matrix truths;
    Matrix flow_map, mcmc_map;
    std::vector<uint8_t> flow_degenerate, mcmc_degenerate; // any-parameter flag per voxel
    std::vector<long> flow_degenerate_counts, mcmc_degenerate_counts; // per parameter
    std::vector<double> flow_seconds, mcmc_seconds; // per voxel (sampling incl. MCMC init)
    std::vector<double> flow_mean_abs_bias, mcmc_mean_abs_bias;
    double flow_mean_seconds = 0.0, mcmc_mean_seconds = 0.0, speedup = 0.0;
};

ComparisonReport compare_with_mcmc(const FlowModel& flow, const PriorSpec& spec,
                                   const HarnessContext& ctx, std::size_t n_sims, double snr,
                                   int n_posterior_samples, const MCMCConfig& mcmc_config,
                                   uint64_t seed);

/// Degenerate-marginal counts per parameter over simulated voxels.
struct CensusReport {
    std::string model;
    double snr = 0.0;
    std::size_t n_sims = 0;
    int n_posterior_samples = 0;
    uint64_t seed = 0;
    std::vector<std::string> param_names;
    std::vector<long> degenerate_counts; // per parameter
    long degenerate_voxels = 0;          // voxels with any degenerate marginal
    double sampling_seconds = 0.0, summary_seconds = 0.0;
};

CensusReport degeneracy_census(const FlowModel& flow, const PriorSpec& spec,
                               const HarnessContext& ctx, std::size_t n_sims, double snr,
                               int n_posterior_samples, uint64_t seed);

/// MAPs from the learned-feature flow vs a flow conditioned on the
/// direction-averaged shell means, on the same simulations. RMSE columns
/// are restricted to voxels non-degenerate under both variants.
struct FeatureComparisonReport {
    std::string model;
    double snr = 0.0;
    std::size_t n_sims = 0;
    int n_posterior_samples = 0;
    uint64_t seed = 0;
    std::vector<std::string> param_names;
    Matrix truths;
    Matrix feature_map, summary_map;
    std::vector<uint8_t> feature_degenerate, summary_degenerate;
    std::vector<double> feature_rmse, summary_rmse;
    std::size_t n_kept = 0;
};

FeatureComparisonReport compare_feature_extraction(const FlowModel& feature_flow,
                                                   const FlowModel& summary_flow,
                                                   const PriorSpec& spec,
                                                   const HarnessContext& ctx, std::size_t n_sims,
                                                   double snr, int n_posterior_samples,
                                                   uint64_t seed);

/// Per-parameter uncertainty distributions across noise levels, on shared
/// ground truths. flows[i] must be trained at noise level snr_levels[i]
/// (0 = noise-free).
struct SnrSweepReport {
    std::string model;
    std::size_t n_sims = 0;
    int n_posterior_samples = 0;
    uint64_t seed = 0;
    std::vector<double> snr_levels;
    std::vector<std::string> param_names;
    std::vector<Matrix> uncertainty_pct;     // per level: n_sims x d
    std::vector<std::vector<double>> mean_uncertainty; // level x param
    std::vector<double> overall_mean_uncertainty;      // per level
};

SnrSweepReport snr_sweep(const std::vector<const FlowModel*>& flows, const PriorSpec& spec,
                         const HarnessContext& ctx, const std::vector<double>& snr_levels,
                         std::size_t n_sims, int n_posterior_samples, uint64_t seed);

/// Posterior predictive check: direction-averaged inputs against the
/// min-max envelope of reconstructions from posterior draws.
struct PpcReport {
    std::string model;
    double snr = 0.0;
    std::size_t n_truths = 0, n_pp = 0;
    int n_posterior_samples = 0;
    uint64_t seed = 0;
    std::vector<double> shell_bvalues; // non-zero shells, ascending
    Matrix input_da;                   // n_truths x shells
    Matrix envelope_lo, envelope_hi;
    double coverage = 0.0;   // fraction of (truth, shell) pairs inside
    double mean_width = 0.0; // envelope width averaged over truths and shells
};

PpcReport posterior_predictive_check(const FlowModel& flow, const PriorSpec& spec,
                                     const HarnessContext& ctx, std::size_t n_truths,
                                     std::size_t n_pp, double snr, int n_posterior_samples,
                                     uint64_t seed);

/// Pearson correlations between learned features and the shell means.
struct CorrelationReport {
    std::string model;
    double snr = 0.0;
    std::size_t n_sims = 0;
    uint64_t seed = 0;
    std::vector<double> shell_bvalues;
    Matrix correlation; // n_features x n_shells
};

CorrelationReport feature_correlation(const FlowModel& flow, const PriorSpec& spec,
                                      const HarnessContext& ctx, std::size_t n_sims, double snr,
                                      uint64_t seed);

// JSON (de)serialization; numeric fields survive a round trip exactly.
std::string to_json_string(const ComparisonReport&);
std::string to_json_string(const CensusReport&);
std::string to_json_string(const FeatureComparisonReport&);
std::string to_json_string(const SnrSweepReport&);
std::string to_json_string(const PpcReport&);
std::string to_json_string(const CorrelationReport&);
ComparisonReport comparison_report_from_json(const std::string&);
CensusReport census_report_from_json(const std::string&);
FeatureComparisonReport feature_comparison_report_from_json(const std::string&);
SnrSweepReport snr_sweep_report_from_json(const std::string&);
PpcReport ppc_report_from_json(const std::string&);
CorrelationReport correlation_report_from_json(const std::string&);

} // namespace mupost

#endif
