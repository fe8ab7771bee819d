#include "mupost/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "mupost/errors.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {
constexpr double kTargetAcceptance = 0.44;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
} // namespace

void MCMCConfig::validate() const {
    if (n_samples < 1) throw ConfigError("mcmc: n_samples must be >= 1");
    if (burn_in < 0 || burn_in >= n_samples)
        throw ConfigError("mcmc: burn_in must be in [0, n_samples)");
    if (thinning < 1) throw ConfigError("mcmc: thinning must be >= 1");
    if (adaptation_interval < 1) throw ConfigError("mcmc: adaptation_interval must be >= 1");
    if (sigma_noise <= 0.0) throw ConfigError("mcmc: sigma_noise must be positive");
}

double log_likelihood_offset_gaussian(std::span<const double> x,
                                      std::span<const double> model_signal, double sigma) {
    if (sigma <= 0.0) throw ValidationError("offset gaussian: sigma must be positive");
    check_dims(x.size(), model_signal.size(), "offset gaussian");
    double s2 = sigma * sigma;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double m = model_signal[i];
        if (!std::isfinite(m)) throw NumericError("offset gaussian: non-finite model signal");
        double resid = x[i] - std::sqrt(m * m + s2);
        acc += resid * resid;
    }
    return -acc / (2.0 * s2) -
           static_cast<double>(x.size()) * std::log(sigma * std::sqrt(2.0 * M_PI));
}

SamplerTarget make_dmri_target(const PriorSpec& spec, const AcquisitionProtocol& protocol,
                               std::vector<double> x, double sigma, const SimulatorOptions& opts) {
    check_dims(x.size(), protocol.size(), "mcmc target signal");
    SamplerTarget target;
    const int d = spec.space.dim();
    target.lower = spec.space.lower;
    target.upper = spec.space.upper;
    target.lower.push_back(-1.0); // cos(polar)
    target.upper.push_back(1.0);
    target.lower.push_back(0.0); // azimuth
    target.upper.push_back(2.0 * M_PI);
    target.log_density = [spec, protocol, x = std::move(x), sigma, opts,
                          d](std::span<const double> q) -> double {
        std::span<const double> theta = q.subspan(0, d);
        if (!in_support(spec, theta)) return kNegInf;
        double ct = q[d];
        double phi = q[d + 1];
        if (ct < -1.0 || ct > 1.0) return kNegInf;
        double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        ParameterVector pv;
        pv.values.assign(theta.begin(), theta.end());
        pv.orientation = {st * std::cos(phi), st * std::sin(phi), ct};
        SignalVector sig = simulate_signal(spec.space, pv, protocol, opts);
        return log_likelihood_offset_gaussian(x, sig, sigma);
    };
    return target;
}

namespace {

/// Nelder-Mead minimization of the negative target. Points outside the
/// box are clamped for evaluation and penalized by their excursion.
class NelderMead {
public:
    NelderMead(const SamplerTarget& target, int max_iter) : target_(target), max_iter_(max_iter) {}

    double penalized(std::vector<double> q) const {
        double penalty = 0.0;
        for (int i = 0; i < target_.dim(); ++i) {
            double range = target_.upper[i] - target_.lower[i];
            if (q[i] < target_.lower[i]) {
                penalty += (target_.lower[i] - q[i]) / range;
                q[i] = target_.lower[i];
            } else if (q[i] > target_.upper[i]) {
                penalty += (q[i] - target_.upper[i]) / range;
                q[i] = target_.upper[i];
            }
        }
        double v = target_.log_density(q);
        if (!std::isfinite(v)) return 1e300;
        return -v + 1e4 * penalty;
    }

    std::pair<std::vector<double>, double> run(const std::vector<double>& start) const {
        const int n = target_.dim();
        std::vector<std::vector<double>> pts(n + 1, start);
        for (int i = 0; i < n; ++i) {
            double span = target_.upper[i] - target_.lower[i];
            double step = 0.05 * span;
            if (pts[i + 1][i] + step > target_.upper[i]) step = -step;
            pts[i + 1][i] += step;
        }
        std::vector<double> f(n + 1);
        for (int i = 0; i <= n; ++i) f[i] = penalized(pts[i]);

        for (int iter = 0; iter < max_iter_; ++iter) {
            // order: best..worst
            std::vector<int> ord(n + 1);
            std::iota(ord.begin(), ord.end(), 0);
            std::sort(ord.begin(), ord.end(), [&](int a, int b) { return f[a] < f[b]; });
            int best = ord[0], second_worst = ord[n - 1], worst = ord[n];
            if (f[worst] - f[best] < 1e-12 * (1.0 + std::fabs(f[best]))) break;

            std::vector<double> centroid(n, 0.0);
            for (int i = 0; i <= n; ++i) {
                if (i == worst) continue;
                for (int k = 0; k < n; ++k) centroid[k] += pts[i][k];
            }
            for (int k = 0; k < n; ++k) centroid[k] /= n;

            auto blend = [&](double coef) {
                std::vector<double> q(n);
                for (int k = 0; k < n; ++k)
                    q[k] = centroid[k] + coef * (pts[worst][k] - centroid[k]);
                return q;
            };

            std::vector<double> xr = blend(-1.0); // reflection
            double fr = penalized(xr);
            if (fr < f[best]) {
                std::vector<double> xe = blend(-2.0); // expansion
                double fe = penalized(xe);
                if (fe < fr) {
                    pts[worst] = std::move(xe);
                    f[worst] = fe;
                } else {
                    pts[worst] = std::move(xr);
                    f[worst] = fr;
                }
            } else if (fr < f[second_worst]) {
                pts[worst] = std::move(xr);
                f[worst] = fr;
            } else {
                std::vector<double> xc = blend(0.5); // contraction
                double fc = penalized(xc);
                if (fc < f[worst]) {
                    pts[worst] = std::move(xc);
                    f[worst] = fc;
                } else {
                    for (int i = 0; i <= n; ++i) { // shrink toward best
                        if (i == best) continue;
                        for (int k = 0; k < n; ++k)
                            pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                        f[i] = penalized(pts[i]);
                    }
                }
            }
        }
        int best = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
        std::vector<double> q = pts[best];
        for (int i = 0; i < n; ++i) q[i] = std::clamp(q[i], target_.lower[i], target_.upper[i]);
        return {q, target_.log_density(q)};
    }

private:
    const SamplerTarget& target_;
    int max_iter_;
};

} // namespace

std::vector<double> maximize_target(const SamplerTarget& target, int n_starts, int max_iterations,
                                    uint64_t seed) {
    if (n_starts < 1) throw ValidationError("maximize_target: n_starts must be >= 1");
    const int n = target.dim();
    Rng rng(seed, 0x3713);

    // Latin hypercube starts: one random permutation of strata per coordinate
    std::vector<std::vector<int>> strata(n, std::vector<int>(n_starts));
    for (int k = 0; k < n; ++k) {
        std::iota(strata[k].begin(), strata[k].end(), 0);
        for (int i = n_starts - 1; i > 0; --i)
            std::swap(strata[k][i], strata[k][rng.uniform_index(i + 1)]);
    }

    NelderMead nm(target, max_iterations);
    std::vector<double> best;
    double best_val = kNegInf;
    for (int s = 0; s < n_starts; ++s) {
        std::vector<double> start(n);
        for (int k = 0; k < n; ++k) {
            double u = (strata[k][s] + rng.uniform()) / static_cast<double>(n_starts);
            start[k] = target.lower[k] + u * (target.upper[k] - target.lower[k]);
        }
        auto [q, val] = nm.run(start);
        if (std::isfinite(val) && val > best_val) {
            best_val = val;
            best = std::move(q);
        }
    }
    if (best.empty())
        throw NumericError("maximize_target: every start ended with a non-finite objective");
    return best;
}

ParameterVector mle_init(std::span<const double> x, const PriorSpec& spec,
                         const AcquisitionProtocol& protocol, double sigma, uint64_t seed,
                         const SimulatorOptions& opts, int n_starts, int max_iterations) {
    SamplerTarget target =
        make_dmri_target(spec, protocol, std::vector<double>(x.begin(), x.end()), sigma, opts);
    std::vector<double> q = maximize_target(target, n_starts, max_iterations, seed);
    const int d = spec.space.dim();
    ParameterVector pv;
    pv.values.assign(q.begin(), q.begin() + d);
    double ct = q[d], phi = q[d + 1];
    double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    pv.orientation = {st * std::cos(phi), st * std::sin(phi), ct};
    return pv;
}

MCMCChain run_amwg(const SamplerTarget& target, std::span<const double> init,
                   const MCMCConfig& config, int report_dims) {
    config.validate();
    const int n = target.dim();
    if (report_dims < 0) report_dims = n;
    if (report_dims > n) throw ValidationError("run_amwg: report_dims exceeds dimension");
    check_dims(init.size(), static_cast<std::size_t>(n), "run_amwg init");

    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> current(init.begin(), init.end());
    double cur_lp = target.log_density(current);
    if (!std::isfinite(cur_lp))
        throw NumericError("run_amwg: initial point has non-finite density");

    std::vector<double> log_scale(n);
    for (int i = 0; i < n; ++i) {
        double s = config.proposal_stds.empty() ? 0.1 * (target.upper[i] - target.lower[i])
                                                : config.proposal_stds[i];
        if (s <= 0.0) throw ConfigError("run_amwg: proposal stds must be positive");
        log_scale[i] = std::log(s);
    }

    std::vector<long> accept_total(n, 0), accept_batch(n, 0);
    Rng rng(config.rng_seed, 0xacdc);

    std::size_t kept_rows =
        (static_cast<std::size_t>(config.n_samples - config.burn_in) +
         static_cast<std::size_t>(config.thinning) - 1) /
        static_cast<std::size_t>(config.thinning);
    MCMCChain chain;
    chain.trace = Matrix(kept_rows, report_dims);
    std::size_t out_row = 0;

    std::vector<double> proposal = current;
    for (int sweep = 1; sweep <= config.n_samples; ++sweep) {
        for (int i = 0; i < n; ++i) {
            proposal = current;
            proposal[i] += std::exp(log_scale[i]) * rng.normal();
            double lp;
            if (proposal[i] < target.lower[i] || proposal[i] > target.upper[i]) {
                lp = kNegInf; // uniform prior: reject outside the box
            } else {
                lp = target.log_density(proposal);
            }
            double log_u = std::log(std::max(rng.uniform(), 1e-300));
            if (log_u < lp - cur_lp) {
                current[i] = proposal[i];
                cur_lp = lp;
                ++accept_total[i];
                ++accept_batch[i];
            }
        }
        int kept_index = sweep - config.burn_in - 1;
        if (kept_index >= 0 && kept_index % config.thinning == 0) {
            for (int k = 0; k < report_dims; ++k) chain.trace(out_row, k) = current[k];
            ++out_row;
        }
        if (sweep % config.adaptation_interval == 0) {
            double step = 1.0 / std::sqrt(static_cast<double>(sweep));
            for (int i = 0; i < n; ++i) {
                double rate = static_cast<double>(accept_batch[i]) /
                              static_cast<double>(config.adaptation_interval);
                log_scale[i] += rate > kTargetAcceptance ? step : -step;
                accept_batch[i] = 0;
            }
        }
    }
    chain.trace.rows = out_row; // may be short by one with thinning > 1
    chain.acceptance_rates.resize(n);
    for (int i = 0; i < n; ++i)
        chain.acceptance_rates[i] =
            static_cast<double>(accept_total[i]) / static_cast<double>(config.n_samples);
    chain.mle_init.assign(init.begin(), init.end());
    chain.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return chain;
}

MCMCChain run_amwg_dmri(std::span<const double> x, const PriorSpec& spec,
                        const AcquisitionProtocol& protocol, const MCMCConfig& config,
                        const SimulatorOptions& opts) {
    config.validate();
    auto t0 = std::chrono::steady_clock::now();
    ParameterVector start = mle_init(x, spec, protocol, config.sigma_noise, config.rng_seed, opts,
                                     config.mle_starts, config.mle_max_iterations);
    double mle_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    SamplerTarget target = make_dmri_target(
        spec, protocol, std::vector<double>(x.begin(), x.end()), config.sigma_noise, opts);
    std::vector<double> init = start.values;
    double ct = std::clamp(start.orientation[2], -1.0, 1.0);
    double phi = std::atan2(start.orientation[1], start.orientation[0]);
    if (phi < 0.0) phi += 2.0 * M_PI;
    init.push_back(ct);
    init.push_back(phi);

    MCMCChain chain = run_amwg(target, init, config, spec.space.dim());
    chain.mle_seconds = mle_seconds;
    chain.seconds += mle_seconds;
    return chain;
}

} // namespace mupost
