#include "mupost/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "mupost/errors.hpp"
#include "mupost/parallel.hpp"
#include "mupost/rng.hpp"
#include "mupost/special.hpp"

namespace mupost {

namespace {

constexpr double kTwoPiSq = 4.0 * M_PI * M_PI;

struct GLTable {
    std::vector<double> nodes, weights;
};

const GLTable& gl_table(int order) {
    if (order < 16)
        throw ConfigError("quadrature_order must be >= 16 (got " + std::to_string(order) + ")");
    static std::mutex mtx;
    static std::map<int, GLTable> cache; // node references stay valid on growth
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(order);
    if (it == cache.end()) {
        GLTable t;
        gauss_legendre(order, t.nodes, t.weights);
        it = cache.emplace(order, std::move(t)).first;
    }
    return it->second;
}

/// integral over [-1,1] of exp(p (1-t^2)) I0(s (1-t^2)) dt, the axial form
/// of the sphere integral of exp(n^T A n) with in-plane eigenvalues l1, l2.
double axial_integral(double l1, double l2, const GLTable& gl) {
    double p = 0.5 * (l1 + l2);
    double s = 0.5 * std::fabs(l1 - l2);
    double acc = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        double r = 1.0 - gl.nodes[i] * gl.nodes[i];
        acc += gl.weights[i] * std::exp(p * r) * bessel_i0(s * r);
    }
    return acc;
}

void validate_theta(const ParameterSpace& space, const ParameterVector& theta) {
    if (static_cast<int>(theta.values.size()) != space.dim())
        throw ValidationError("theta dimension does not match " + model_id_name(space.model));
    if (!space.in_bounds(theta.values, 1e-9))
        throw ValidationError("theta out of bounds for " + model_id_name(space.model));
}

} // namespace

const SphereRootTable& SphereRootTable::standard() {
    static const SphereRootTable table = with_count(20);
    return table;
}

SphereRootTable SphereRootTable::with_count(int count) {
    SphereRootTable t;
    t.roots = sphere_boundary_roots(count);
    return t;
}

double odi_to_kappa(double odi) {
    if (odi <= 0.0 || odi >= 1.0) throw ValidationError("ODI must lie in (0, 1)");
    return 1.0 / std::tan(odi * M_PI / 2.0);
}

double watson_gaussian_expectation(double kappa, double c, double cos_mu_g, int order) {
    const GLTable& gl = gl_table(order);
    double cg = std::clamp(cos_mu_g, -1.0, 1.0);
    double sg2 = std::max(0.0, 1.0 - cg * cg);
    // 2x2 block of kappa mu mu^T - c g g^T in an orthonormal basis of span{mu, g}
    double a11 = kappa - c * cg * cg;
    double a12 = -c * cg * std::sqrt(sg2);
    double a22 = -c * sg2;
    double half_tr = 0.5 * (a11 + a22);
    double disc = std::sqrt(std::max(0.0, half_tr * half_tr - (a11 * a22 - a12 * a12)));
    double num = axial_integral(half_tr + disc, half_tr - disc, gl);
    double den = axial_integral(kappa, 0.0, gl);
    return num / den;
}

double sphere_cs(double r_s_um, double d_s, double delta_small_ms, double delta_big_ms,
                 const SphereRootTable& roots) {
    if (r_s_um <= 0.0 || d_s <= 0.0 || delta_small_ms <= 0.0 || delta_big_ms < delta_small_ms)
        throw ValidationError("sphere_cs: inputs must be positive with Delta >= delta");
    double sum = 0.0;
    for (double beta : roots.roots) {
        double alpha2 = beta * beta / (r_s_um * r_s_um);
        double a = alpha2 * d_s; // 1/ms
        double e_dd = std::exp(-a * (delta_big_ms - delta_small_ms));
        double e_d = std::exp(-a * delta_small_ms);
        double e_D = std::exp(-a * delta_big_ms);
        double e_s = std::exp(-a * (delta_big_ms + delta_small_ms));
        double numer = 2.0 + e_dd - 2.0 * e_d - 2.0 * e_D + e_s;
        sum += 1.0 / (alpha2 * alpha2 * (beta * beta - 2.0)) *
               (2.0 * delta_small_ms - numer / a);
    }
    return kTwoPiSq * 2.0 / (d_s * delta_small_ms * delta_small_ms) * sum;
}

SignalVector signal_ball_stick(const ParameterVector& theta, const AcquisitionProtocol& protocol) {
    static const ParameterSpace space = ParameterSpace::for_model(ModelId::BallStick);
    validate_theta(space, theta);
    double f_in = theta.values[0], d_in = theta.values[1], d_e = theta.values[2];
    const auto& n = theta.orientation;
    SignalVector out(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i) {
        const auto& e = protocol.entry(i);
        double dot = e.direction[0] * n[0] + e.direction[1] * n[1] + e.direction[2] * n[2];
        out[i] = f_in * std::exp(-e.bvalue * d_in * dot * dot) +
                 (1.0 - f_in) * std::exp(-e.bvalue * d_e);
    }
    return out;
}

SignalVector signal_standard_model(const ParameterVector& theta,
                                   const AcquisitionProtocol& protocol, int quadrature_order) {
    static const ParameterSpace space = ParameterSpace::for_model(ModelId::StandardModel);
    validate_theta(space, theta);
    double f = theta.values[0], d_a = theta.values[1], odi = theta.values[2];
    double d_par = theta.values[3], d_perp = theta.values[4];
    if (d_perp > d_par + 1e-9)
        throw ValidationError("standard model requires D_e_perp < D_e_par");
    double kappa = odi_to_kappa(odi);
    const auto& mu = theta.orientation;
    SignalVector out(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i) {
        const auto& e = protocol.entry(i);
        if (e.bvalue == 0.0) {
            out[i] = 1.0;
            continue;
        }
        double cg = e.direction[0] * mu[0] + e.direction[1] * mu[1] + e.direction[2] * mu[2];
        double stick = watson_gaussian_expectation(kappa, e.bvalue * d_a, cg, quadrature_order);
        double zeppelin = std::exp(-e.bvalue * d_perp) *
                          watson_gaussian_expectation(kappa, e.bvalue * (d_par - d_perp), cg,
                                                      quadrature_order);
        out[i] = f * stick + (1.0 - f) * zeppelin;
    }
    return out;
}

SignalVector signal_extended_sandi(const ParameterVector& theta,
                                   const AcquisitionProtocol& protocol, int quadrature_order) {
    static const ParameterSpace space = ParameterSpace::for_model(ModelId::ExtendedSandi);
    validate_theta(space, theta);
    double f_n = theta.values[0], f_s = theta.values[1], d_n = theta.values[2];
    double odi = theta.values[3], d_e = theta.values[4], c_s = theta.values[5];
    if (f_n + f_s > 1.0 + 1e-9)
        throw ValidationError("extended sandi requires f_n + f_s <= 1");
    double f_e = std::max(0.0, 1.0 - f_n - f_s);
    double kappa = odi_to_kappa(odi);
    const auto& mu = theta.orientation;
    SignalVector out(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i) {
        const auto& e = protocol.entry(i);
        if (e.bvalue == 0.0) {
            out[i] = 1.0;
            continue;
        }
        double cg = e.direction[0] * mu[0] + e.direction[1] * mu[1] + e.direction[2] * mu[2];
        double neurite =
            watson_gaussian_expectation(kappa, e.bvalue * d_n, cg, quadrature_order);
        // cyclic q-value squared: q^2 = b / ((2 pi)^2 (Delta - delta/3))
        double q2 = e.bvalue / (kTwoPiSq * (e.delta_big - e.delta_small / 3.0));
        double soma = std::exp(-q2 * c_s);
        double ball = std::exp(-e.bvalue * d_e);
        out[i] = f_n * neurite + f_s * soma + f_e * ball;
    }
    return out;
}

SignalVector simulate_signal(const ParameterSpace& space, const ParameterVector& theta,
                             const AcquisitionProtocol& protocol, const SimulatorOptions& opts) {
    switch (space.model) {
        case ModelId::BallStick: return signal_ball_stick(theta, protocol);
        case ModelId::StandardModel:
            return signal_standard_model(theta, protocol, opts.quadrature_order);
        case ModelId::ExtendedSandi:
            return signal_extended_sandi(theta, protocol, opts.quadrature_order);
        case ModelId::Custom:
            throw ValidationError("no simulator for custom parameter spaces");
    }
    throw ValidationError("unreachable model id");
}

NoiseMode noise_mode_from_name(const std::string& name) {
    if (name == "rician") return NoiseMode::Rician;
    if (name == "complex_gaussian_magnitude") return NoiseMode::ComplexGaussianMagnitude;
    throw ConfigError("unknown noise mode: " + name);
}

void add_noise_inplace(std::span<double> signal, double snr, Rng& rng) {
    if (snr <= 0.0) throw ValidationError("add_noise: snr must be positive");
    double sigma = 1.0 / snr;
    for (double& s : signal) {
        double re = s + sigma * rng.normal();
        double im = sigma * rng.normal();
        s = std::sqrt(re * re + im * im);
    }
}

SignalVector add_noise(const SignalVector& signal, double snr, NoiseMode, uint64_t seed) {
    // both modes are the same construction: Gaussian noise on the real and
    // imaginary parts followed by the magnitude
    SignalVector out = signal;
    Rng rng(seed);
    add_noise_inplace(out, snr, rng);
    return out;
}

TrainingSet generate_training_set(const PriorSpec& spec, const AcquisitionProtocol& protocol,
                                  std::size_t n, double snr, uint64_t seed,
                                  const SimulatorOptions& opts, int workers) {
    if (n < 1) throw ValidationError("generate_training_set: n must be >= 1");
    if (snr < 0.0) throw ValidationError("generate_training_set: snr must be >= 0");
    TrainingSet set;
    set.space = spec.space;
    set.snr = snr;
    set.seed = seed;
    set.theta = Matrix(n, spec.space.names.size());
    set.x = Matrix(n, protocol.size());
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng(seed, i);
        ParameterVector pv;
        pv.values.resize(spec.space.names.size());
        sample_prior_row(spec, rng, pv.values);
        rng.unit_vector(pv.orientation.data());
        SignalVector sig = simulate_signal(spec.space, pv, protocol, opts);
        if (snr > 0.0) add_noise_inplace(sig, snr, rng);
        std::copy(pv.values.begin(), pv.values.end(), set.theta.row(i));
        std::copy(sig.begin(), sig.end(), set.x.row(i));
    });
    return set;
}

} // namespace mupost
