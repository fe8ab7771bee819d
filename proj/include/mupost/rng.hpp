#ifndef MUPOST_RNG_HPP
#define MUPOST_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace mupost {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic random stream. All stochastic code in the library goes
/// through this wrapper so runs are bit-reproducible for a given seed on
/// any platform: mt19937_64 output is standard-mandated and the uniform
/// and normal transforms below are our own.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : gen_(splitmix64(seed ^ splitmix64(stream + 0x51ed2701))) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint64_t uniform_index(uint64_t n) {
        // rejection-free modulo is fine here; n is always tiny vs 2^64
        return gen_() % n;
    }

    /// Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        // avoid log(0)
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniformly distributed unit 3-vector.
    void unit_vector(double out[3]) {
        double z = uniform(-1.0, 1.0);
        double phi = uniform(0.0, 6.283185307179586476925286766559);
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        out[0] = s * std::cos(phi);
        out[1] = s * std::sin(phi);
        out[2] = z;
    }

    uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace mupost

#endif
