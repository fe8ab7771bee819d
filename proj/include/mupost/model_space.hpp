#ifndef MUPOST_MODEL_SPACE_HPP
#define MUPOST_MODEL_SPACE_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mupost {

enum class ModelId { BallStick, StandardModel, ExtendedSandi, Custom };

std::string model_id_name(ModelId id);
ModelId model_id_from_name(const std::string& name);

/// Named parameters with uniform prior bounds; the inference target.
///
/// Dimensions per model:
///   BallStick      (3): f_in, D_in, D_e
///   StandardModel  (5): f, D_a, ODI, D_e_par, D_e_perp  (D_e_perp < D_e_par)
///   ExtendedSandi  (6): f_n, f_s, D_n, ODI, D_e, C_s    (f_e = 1 - f_n - f_s)
///
/// Fiber orientation is a nuisance variable handled outside this vector:
/// sampled during simulation, never inferred.
struct ParameterSpace {
    ModelId model = ModelId::Custom;
    std::vector<std::string> names;
    std::vector<double> lower;
    std::vector<double> upper;

    int dim() const { return static_cast<int>(names.size()); }
    double range(int i) const { return upper[i] - lower[i]; }

    static ParameterSpace for_model(ModelId id);
    static ParameterSpace custom(std::vector<std::string> names, std::vector<double> lower,
                                 std::vector<double> upper);

    void validate() const;
    bool in_bounds(std::span<const double> theta, double tol = 0.0) const;
};

/// A point in a ParameterSpace plus the sampled fiber orientation.
struct ParameterVector {
    std::vector<double> values;
    std::array<double, 3> orientation{0.0, 0.0, 1.0};
};

} // namespace mupost

#endif
