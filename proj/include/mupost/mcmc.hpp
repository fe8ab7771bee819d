#ifndef MUPOST_MCMC_HPP
#define MUPOST_MCMC_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mupost/forward_models.hpp"
#include "mupost/mat.hpp"
#include "mupost/priors.hpp"

namespace mupost {

struct MCMCConfig {
    int n_samples = 15200;
    int burn_in = 200;
    int thinning = 1; // 1 = none
    std::vector<double> proposal_stds; // empty: 0.1 x coordinate range
    int adaptation_interval = 50;      // sweeps between proposal adaptations
    double sigma_noise = 0.02;         // sigma of the offset Gaussian likelihood
    uint64_t rng_seed = 0;
    int mle_starts = 20;
    int mle_max_iterations = 2000;

    void validate() const;
};

struct MCMCChain {
    Matrix trace; // (n_samples - burn_in) / thinning rows, model-parameter columns
    std::vector<double> acceptance_rates; // per sampled coordinate (incl. orientation)
    std::vector<double> mle_init;         // starting point (incl. orientation coords)
    double seconds = 0.0;
    double mle_seconds = 0.0;
};

/// Offset Gaussian log-likelihood:
///   -sum_i (x_i - sqrt(M_i^2 + sigma^2))^2 / (2 sigma^2) - m log(sigma sqrt(2 pi))
double log_likelihood_offset_gaussian(std::span<const double> x,
                                      std::span<const double> model_signal, double sigma);

/// Generic coordinate target for the samplers: log density (up to a
/// constant) over a box, -inf outside the support.
struct SamplerTarget {
    std::function<double(std::span<const double>)> log_density;
    std::vector<double> lower, upper;
    int dim() const { return static_cast<int>(lower.size()); }
};

/// dMRI target: offset Gaussian likelihood of the forward model, uniform
/// prior over the parameter support. Coordinates are the model parameters
/// followed by the orientation (cos(polar) in [-1,1], azimuth in [0,2pi)).
/// Orientation is sampled like any coordinate and dropped from the trace.
SamplerTarget make_dmri_target(const PriorSpec& spec, const AcquisitionProtocol& protocol,
                               std::vector<double> x, double sigma,
                               const SimulatorOptions& opts = {});

/// Number of orientation coordinates appended by make_dmri_target.
inline constexpr int kOrientationCoords = 2;

/// Multi-start Nelder-Mead maximization of the target over its box.
/// Deterministic per seed; throws when every start fails.
std::vector<double> maximize_target(const SamplerTarget& target, int n_starts, int max_iterations,
                                    uint64_t seed);

/// Maximum-likelihood initializer for the dMRI target: returns model
/// parameters plus fitted orientation.
ParameterVector mle_init(std::span<const double> x, const PriorSpec& spec,
                         const AcquisitionProtocol& protocol, double sigma, uint64_t seed,
                         const SimulatorOptions& opts = {}, int n_starts = 20,
                         int max_iterations = 2000);

/// Adaptive Metropolis-within-Gibbs: component-wise Gaussian random-walk
/// updates swept in order, per-coordinate proposal scales adapted every
/// adaptation_interval sweeps toward 0.44 acceptance with a vanishing
/// 1/sqrt(sweep) step. report_dims: how many leading coordinates enter
/// the trace (the rest are sampled but not recorded).
MCMCChain run_amwg(const SamplerTarget& target, std::span<const double> init,
                   const MCMCConfig& config, int report_dims = -1);

/// Full baseline for one voxel: MLE init then AMWG over the dMRI target.
MCMCChain run_amwg_dmri(std::span<const double> x, const PriorSpec& spec,
                        const AcquisitionProtocol& protocol, const MCMCConfig& config,
                        const SimulatorOptions& opts = {});

} // namespace mupost

#endif
