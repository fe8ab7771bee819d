#include "mupost/special.hpp"

#include <cmath>

#include "mupost/errors.hpp"

namespace mupost {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw ValidationError("gauss_legendre: order must be >= 1");
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Newton iteration from the Chebyshev-based initial guess
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p1 = 0.0, dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            double step = p1 / dp;
            t -= step;
            if (std::fabs(step) < 1e-15) break;
        }
        nodes[i] = t;
        weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

double bessel_i0(double x) {
    x = std::fabs(x);
    if (x < 7.75) {
        // power series sum_k (x^2/4)^k / (k!)^2
        double q = 0.25 * x * x;
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 64; ++k) {
            term *= q / (static_cast<double>(k) * k);
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return sum;
    }
    // asymptotic: I0(x) ~ e^x / sqrt(2 pi x) * sum_k a_k / x^k
    double inv = 1.0 / x;
    double c = 1.0, sum = 1.0, num = 1.0;
    for (int k = 1; k <= 12; ++k) {
        // a_k = prod_{j=1..k} (2j-1)^2 / (8 j)
        num *= (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k);
        c = num * std::pow(inv, k);
        sum += c;
        if (std::fabs(c) < 1e-17) break;
    }
    return std::exp(x) * sum / std::sqrt(2.0 * M_PI * x);
}

std::vector<double> sphere_boundary_roots(int count) {
    if (count < 1) throw ValidationError("sphere_boundary_roots: count must be >= 1");
    auto f = [](double x) {
        // (x)^-1 J_{3/2}(x) - J_{5/2}(x); via spherical Bessel identities this
        // is proportional to sin(x)(x^2 - 2) + 2 x cos(x), which is cheap and
        // has no Bessel-library dependence in the hot path.
        return std::sin(x) * (x * x - 2.0) + 2.0 * x * std::cos(x);
    };
    std::vector<double> roots;
    roots.reserve(count);
    double x = 0.5;
    double step = 1e-2;
    double prev = f(x);
    while (static_cast<int>(roots.size()) < count) {
        double xn = x + step;
        double cur = f(xn);
        if (prev == 0.0) {
            roots.push_back(x);
        } else if (prev * cur < 0.0) {
            double a = x, b = xn;
            for (int it = 0; it < 200; ++it) {
                double m = 0.5 * (a + b);
                if (f(a) * f(m) <= 0.0)
                    b = m;
                else
                    a = m;
                if (b - a < 1e-14) break;
            }
            roots.push_back(0.5 * (a + b));
        }
        x = xn;
        prev = cur;
    }
    return roots;
}

} // namespace mupost
