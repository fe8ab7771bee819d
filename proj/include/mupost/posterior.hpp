#ifndef MUPOST_POSTERIOR_HPP
#define MUPOST_POSTERIOR_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "mupost/flow.hpp"
#include "mupost/mat.hpp"
#include "mupost/priors.hpp"

namespace mupost {

/// Support-filtered draws from a trained flow for one observation.
struct PosteriorSamples {
    Matrix samples; // n x d, every row passes in_support
    ParameterSpace space;
    double accepted_fraction = 1.0;
};

struct MixtureFit {
    double mean1 = 0.0, std1 = 0.0;
    double mean2 = 0.0, std2 = 0.0;
    double weight1 = 1.0; // weight of component 1; component 2 has 1 - weight1
    double log_likelihood = 0.0;
};

struct DegeneracyResult {
    bool degenerate = false;
    MixtureFit fit;
};

struct DegeneracyOptions {
    int grid_size = 1000;
    int restarts = 12;   // k-means++-style restarts, capped at 100
    int max_iterations = 500;
    double tolerance = 1e-8; // absolute log-likelihood change
    uint64_t seed = 17;

    void validate() const;
};

struct SummaryOptions {
    int grid_size = 1000;
    /// 0 = Silverman's rule; > 0 pins the kernel bandwidth (in parameter
    /// units), which makes the estimate invariant to sample duplication.
    double bandwidth = 0.0;
    DegeneracyOptions degeneracy;
};

/// Per-parameter posterior description. Percentages are relative to the
/// prior range. For degenerate marginals the MAP is the dominant mode
/// (global maximum of the density estimate).
struct ParameterSummary {
    double map = 0.0;
    double uncertainty_pct = 0.0; // IQR of the 50% most probable samples
    double ambiguity_pct = 0.0;   // FWHM of the density estimate
    bool degenerate = false;
    MixtureFit mixture;
};

struct PosteriorSummary {
    std::vector<ParameterSummary> params;
};

/// Gaussian KDE on a uniform grid over [lo, hi] with reflective boundary
/// correction. Exposed for tests and for the summary computations.
struct KdeResult {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};
KdeResult kde_density(std::span<const double> samples, double lo, double hi, int grid_size,
                      double bandwidth_override = 0.0);

/// Draw from the flow and keep rows inside the prior support until
/// n_target rows are collected or 100 x n_target draws were spent; errors
/// when fewer than 1% of draws are acceptable.
PosteriorSamples rejection_sample(const FlowModel& flow, std::span<const double> x,
                                  std::size_t n_target, const PriorSpec& spec, uint64_t seed);

/// Two-component Gaussian mixture fit (EM, k-means++-style starts);
/// degenerate iff the mixture density has more than one local maximum on
/// the evaluation grid and the means are separated by more than the sum
/// of the standard deviations.
DegeneracyResult detect_degeneracy(std::span<const double> samples, double lo, double hi,
                                   const DegeneracyOptions& opts = {});

/// MAP / uncertainty / ambiguity / degeneracy per parameter.
PosteriorSummary summarize(const PosteriorSamples& samples, const SummaryOptions& opts = {});

/// Single-parameter variant used by both summarize and the harness.
ParameterSummary summarize_marginal(std::span<const double> samples, double lo, double hi,
                                    const SummaryOptions& opts = {});

} // namespace mupost

#endif
