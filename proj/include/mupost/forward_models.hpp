#ifndef MUPOST_FORWARD_MODELS_HPP
#define MUPOST_FORWARD_MODELS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "mupost/mat.hpp"
#include "mupost/model_space.hpp"
#include "mupost/priors.hpp"
#include "mupost/protocol.hpp"

namespace mupost {

using SignalVector = std::vector<double>;

/// First roots beta_m of the sphere boundary equation; alpha_m = beta_m / r_s.
struct SphereRootTable {
    std::vector<double> roots;
    static const SphereRootTable& standard(); // 20 roots, computed once
    static SphereRootTable with_count(int count);
};

struct SimulatorOptions {
    /// Gauss-Legendre order for the Watson orientation integral.
    int quadrature_order = 32;
};

/// Watson concentration from the orientation dispersion index,
/// kappa = 1 / tan(ODI * pi / 2).
double odi_to_kappa(double odi);

/// E_{n ~ Watson(mu, kappa)}[ exp(-c (g.n)^2) ] for unit vectors mu, g.
/// Evaluated by reducing the sphere integral to one dimension (the
/// exponent matrix kappa mu mu^T - c g g^T has a zero eigenvalue normal
/// to span{mu, g}) and applying Gauss-Legendre of the given order.
double watson_gaussian_expectation(double kappa, double c, double cos_mu_g, int order);

/// Soma proxy: truncated series C_s(r_s, D_s, delta, Delta) in um^2,
/// defined against the cyclic q-value (q = gamma delta g / 2 pi), so the
/// sphere compartment attenuates as exp(-b C_s / ((2 pi)^2 (Delta - delta/3))).
double sphere_cs(double r_s_um, double d_s, double delta_small_ms, double delta_big_ms,
                 const SphereRootTable& roots = SphereRootTable::standard());

/// Two compartments: stick along theta.orientation plus isotropic ball.
SignalVector signal_ball_stick(const ParameterVector& theta, const AcquisitionProtocol& protocol);

/// Watson-dispersed stick plus axially symmetric extra-neurite tensor.
SignalVector signal_standard_model(const ParameterVector& theta,
                                   const AcquisitionProtocol& protocol,
                                   int quadrature_order = 32);

/// Watson-dispersed stick, sphere (via C_s) and isotropic ball;
/// f_e = 1 - f_n - f_s.
SignalVector signal_extended_sandi(const ParameterVector& theta,
                                   const AcquisitionProtocol& protocol,
                                   int quadrature_order = 32);

/// Dispatch on space.model.
SignalVector simulate_signal(const ParameterSpace& space, const ParameterVector& theta,
                             const AcquisitionProtocol& protocol,
                             const SimulatorOptions& opts = {});

enum class NoiseMode { Rician, ComplexGaussianMagnitude };

NoiseMode noise_mode_from_name(const std::string& name);

/// Magnitude of the signal after complex Gaussian noise with sigma = 1/snr:
/// out_i = sqrt((s_i + sigma n1)^2 + (sigma n2)^2). The two mode names are
/// the same construction. Deterministic under the seed.
SignalVector add_noise(const SignalVector& signal, double snr, NoiseMode mode, uint64_t seed);
void add_noise_inplace(std::span<double> signal, double snr, class Rng& rng);

/// Paired prior draws and simulated (optionally noisy) signals, rows aligned.
struct TrainingSet {
    Matrix theta; // n x d
    Matrix x;     // n x m
    ParameterSpace space;
    double snr = 0.0; // 0 = noise-free
    uint64_t seed = 0;
};

/// snr > 0 applies Rician noise; snr == 0 leaves signals noise-free.
/// Orientations are drawn uniformly on the sphere per row. Row i depends
/// only on (seed, i), so worker count does not affect the output.
TrainingSet generate_training_set(const PriorSpec& spec, const AcquisitionProtocol& protocol,
                                  std::size_t n, double snr, uint64_t seed,
                                  const SimulatorOptions& opts = {}, int workers = 0);

} // namespace mupost

#endif
