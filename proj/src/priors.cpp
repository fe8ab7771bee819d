#include "mupost/priors.hpp"

#include <cmath>
#include <limits>

#include "mupost/errors.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {
constexpr double kBoundaryTol = 1e-12;
} // namespace

PriorSpec PriorSpec::for_model(ModelId id) {
    return for_space(ParameterSpace::for_model(id));
}

PriorSpec PriorSpec::for_space(const ParameterSpace& space) {
    PriorSpec spec;
    spec.space = space;
    switch (space.model) {
        case ModelId::StandardModel: spec.constraint = PriorConstraint::OrderedDiffusivities; break;
        case ModelId::ExtendedSandi: spec.constraint = PriorConstraint::SimplexFractions; break;
        default: spec.constraint = PriorConstraint::None; break;
    }
    return spec;
}

void sample_prior_row(const PriorSpec& spec, Rng& rng, std::span<double> out) {
    const auto& sp = spec.space;
    check_dims(out.size(), sp.names.size(), "sample_prior_row");
    switch (spec.constraint) {
        case PriorConstraint::None:
            for (int i = 0; i < sp.dim(); ++i) out[i] = rng.uniform(sp.lower[i], sp.upper[i]);
            break;
        case PriorConstraint::OrderedDiffusivities: {
            // layout: f, D_a, ODI, D_e_par, D_e_perp
            out[0] = rng.uniform(sp.lower[0], sp.upper[0]);
            out[1] = rng.uniform(sp.lower[1], sp.upper[1]);
            out[2] = rng.uniform(sp.lower[2], sp.upper[2]);
            double u0 = rng.uniform(), u1 = rng.uniform();
            double d_par = std::sqrt((3.0 - 0.1) * (3.0 - 0.1) * u0) + 0.1;
            double d_perp = (d_par - 0.1) * u1 + 0.1;
            out[3] = d_par;
            out[4] = d_perp;
            break;
        }
        case PriorConstraint::SimplexFractions: {
            // layout: f_n, f_s, D_n, ODI, D_e, C_s
            double k1 = rng.uniform(), k2 = rng.uniform();
            double root = std::sqrt(k1);
            out[0] = k2 * root;
            out[1] = (1.0 - k2) * root;
            for (int i = 2; i < sp.dim(); ++i) out[i] = rng.uniform(sp.lower[i], sp.upper[i]);
            break;
        }
    }
}

Matrix sample_prior(const PriorSpec& spec, std::size_t n, uint64_t seed) {
    if (n < 1) throw ValidationError("sample_prior: n must be >= 1");
    Matrix out(n, spec.space.names.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) sample_prior_row(spec, rng, out.row_span(i));
    return out;
}

bool in_support(const PriorSpec& spec, std::span<const double> theta) {
    const auto& sp = spec.space;
    if (theta.size() != sp.names.size()) return false;
    if (!sp.in_bounds(theta, kBoundaryTol)) return false;
    switch (spec.constraint) {
        case PriorConstraint::None: return true;
        case PriorConstraint::OrderedDiffusivities:
            return theta[4] <= theta[3] + kBoundaryTol;
        case PriorConstraint::SimplexFractions:
            return theta[0] + theta[1] <= 1.0 + kBoundaryTol;
    }
    return true;
}

double log_prior(const PriorSpec& spec, std::span<const double> theta) {
    if (!in_support(spec, theta)) return -std::numeric_limits<double>::infinity();
    const auto& sp = spec.space;
    double log_volume = 0.0;
    switch (spec.constraint) {
        case PriorConstraint::None:
            for (int i = 0; i < sp.dim(); ++i) log_volume += std::log(sp.range(i));
            break;
        case PriorConstraint::OrderedDiffusivities:
            for (int i = 0; i < 3; ++i) log_volume += std::log(sp.range(i));
            log_volume += std::log(0.5 * (3.0 - 0.1) * (3.0 - 0.1)); // triangle area
            break;
        case PriorConstraint::SimplexFractions:
            log_volume += std::log(0.5); // area of {f_n + f_s <= 1} in the unit square
            for (int i = 2; i < sp.dim(); ++i) log_volume += std::log(sp.range(i));
            break;
    }
    return -log_volume;
}

} // namespace mupost
