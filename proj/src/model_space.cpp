#include "mupost/model_space.hpp"

#include "mupost/errors.hpp"

namespace mupost {

std::string model_id_name(ModelId id) {
    switch (id) {
        case ModelId::BallStick: return "ball_stick";
        case ModelId::StandardModel: return "standard_model";
        case ModelId::ExtendedSandi: return "extended_sandi";
        case ModelId::Custom: return "custom";
    }
    return "custom";
}

ModelId model_id_from_name(const std::string& name) {
    if (name == "ball_stick") return ModelId::BallStick;
    if (name == "standard_model") return ModelId::StandardModel;
    if (name == "extended_sandi") return ModelId::ExtendedSandi;
    if (name == "custom") return ModelId::Custom;
    throw ConfigError("unknown model id: " + name +
                      " (expected ball_stick, standard_model or extended_sandi)");
}

ParameterSpace ParameterSpace::for_model(ModelId id) {
    ParameterSpace s;
    s.model = id;
    switch (id) {
        case ModelId::BallStick:
            s.names = {"f_in", "D_in", "D_e"};
            s.lower = {0.0, 0.1, 0.1};
            s.upper = {1.0, 3.0, 3.0};
            break;
        case ModelId::StandardModel:
            s.names = {"f", "D_a", "ODI", "D_e_par", "D_e_perp"};
            s.lower = {0.0, 0.1, 0.03, 0.1, 0.1};
            s.upper = {1.0, 3.0, 0.95, 3.0, 3.0};
            break;
        case ModelId::ExtendedSandi:
            s.names = {"f_n", "f_s", "D_n", "ODI", "D_e", "C_s"};
            s.lower = {0.0, 0.0, 0.1, 0.03, 0.1, 0.15};
            s.upper = {1.0, 1.0, 3.0, 0.95, 3.0, 1105.0};
            break;
        case ModelId::Custom:
            throw ValidationError("custom spaces need explicit names and bounds");
    }
    s.validate();
    return s;
}

ParameterSpace ParameterSpace::custom(std::vector<std::string> names, std::vector<double> lower,
                                      std::vector<double> upper) {
    ParameterSpace s;
    s.model = ModelId::Custom;
    s.names = std::move(names);
    s.lower = std::move(lower);
    s.upper = std::move(upper);
    s.validate();
    return s;
}

void ParameterSpace::validate() const {
    if (names.empty()) throw ValidationError("parameter space has no parameters");
    if (lower.size() != names.size() || upper.size() != names.size())
        throw ValidationError("parameter space bounds do not match parameter count");
    for (std::size_t i = 0; i < names.size(); ++i)
        if (!(lower[i] < upper[i]))
            throw ValidationError("parameter " + names[i] + ": lower bound must be below upper");
}

bool ParameterSpace::in_bounds(std::span<const double> theta, double tol) const {
    if (theta.size() != names.size()) return false;
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (theta[i] < lower[i] - tol || theta[i] > upper[i] + tol) return false;
    return true;
}

} // namespace mupost
