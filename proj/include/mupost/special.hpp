#ifndef MUPOST_SPECIAL_HPP
#define MUPOST_SPECIAL_HPP

#include <vector>

namespace mupost {

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Modified Bessel function of the first kind, order zero. Power series
/// below 7.75, exponential-scaled asymptotic expansion above; ~1e-14
/// relative accuracy on the range the simulators touch (x in [0, 60]).
double bessel_i0(double x);

/// First `count` positive roots of (x)^{-1} J_{3/2}(x) = J_{5/2}(x),
/// equivalently tan(x) = 2x / (2 - x^2): the boundary condition for
/// restricted diffusion in a sphere. Found by bracketed bisection.
std::vector<double> sphere_boundary_roots(int count);

} // namespace mupost

#endif
