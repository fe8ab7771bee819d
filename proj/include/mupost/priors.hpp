#ifndef MUPOST_PRIORS_HPP
#define MUPOST_PRIORS_HPP

#include <cstdint>
#include <span>

#include "mupost/mat.hpp"
#include "mupost/model_space.hpp"

namespace mupost {

/// How a constrained support is reached from independent uniforms.
enum class PriorConstraint { None, OrderedDiffusivities, SimplexFractions };

/// Uniform prior over a ParameterSpace, with the reparameterizations that
/// keep constrained supports uniformly covered:
///   ordered diffusivities: D_par = sqrt((3.0-0.1)^2 u0) + 0.1,
///                          D_perp = (D_par - 0.1) u1 + 0.1
///   simplex fractions:     f_n = k2 sqrt(k1), f_s = (1-k2) sqrt(k1),
///                          f_e = 1 - sqrt(k1)
struct PriorSpec {
    ParameterSpace space;
    PriorConstraint constraint = PriorConstraint::None;

    static PriorSpec for_model(ModelId id);
    static PriorSpec for_space(const ParameterSpace& space);
};

/// Draw n rows from the prior; columns follow space.names order.
Matrix sample_prior(const PriorSpec& spec, std::size_t n, uint64_t seed);

/// Fill one pre-allocated row (used by samplers that own their RNG).
void sample_prior_row(const PriorSpec& spec, class Rng& rng, std::span<double> out);

/// Bounds plus constraint check. Boundary equalities are accepted within
/// 1e-12 so float round-off at the constraint edge is not rejected.
bool in_support(const PriorSpec& spec, std::span<const double> theta);

/// Log prior density (constant inside the support, -inf outside).
double log_prior(const PriorSpec& spec, std::span<const double> theta);

} // namespace mupost

#endif
