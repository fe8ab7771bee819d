#include "mupost/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mupost/errors.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Normalized coordinates t = (v - lo) / (hi - lo), clamped into [0, 1].
std::vector<double> normalize_samples(std::span<const double> samples, double lo, double hi) {
    if (!(hi > lo)) throw ValidationError("prior range must have hi > lo");
    std::vector<double> t(samples.size());
    double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < samples.size(); ++i)
        t[i] = std::clamp((samples[i] - lo) * inv, 0.0, 1.0);
    return t;
}

struct BinnedSamples {
    std::vector<double> weight; // counts per grid node
    std::size_t n = 0;
};

BinnedSamples bin_samples(const std::vector<double>& t, int grid_size) {
    BinnedSamples b;
    b.weight.assign(grid_size, 0.0);
    b.n = t.size();
    double scale = static_cast<double>(grid_size - 1);
    for (double v : t) {
        auto idx = static_cast<long>(std::lround(v * scale));
        idx = std::clamp<long>(idx, 0, grid_size - 1);
        b.weight[static_cast<std::size_t>(idx)] += 1.0;
    }
    return b;
}

double silverman_bandwidth(std::vector<double> t) {
    std::size_t n = t.size();
    double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    std::sort(t.begin(), t.end());
    double iqr = quantile_sorted(t, 0.75) - quantile_sorted(t, 0.25);
    double sigma = std::sqrt(var);
    double spread = std::min(sigma, iqr / 1.34);
    if (spread <= 0.0) spread = std::max(sigma, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

} // namespace

void DegeneracyOptions::validate() const {
    if (grid_size < 16) throw ValidationError("degeneracy grid too small");
    if (restarts < 1 || restarts > 100) throw ValidationError("restarts must be in [1, 100]");
    if (max_iterations < 1 || max_iterations > 500)
        throw ValidationError("max_iterations must be in [1, 500]");
    if (tolerance <= 0.0) throw ValidationError("tolerance must be positive");
}

KdeResult kde_density(std::span<const double> samples, double lo, double hi, int grid_size,
                      double bandwidth_override) {
    if (samples.empty()) throw ValidationError("kde_density: no samples");
    if (grid_size < 8) throw ValidationError("kde_density: grid too small");
    auto t = normalize_samples(samples, lo, hi);
    double range = hi - lo;
    double h = bandwidth_override > 0.0 ? bandwidth_override / range : silverman_bandwidth(t);
    double delta = 1.0 / static_cast<double>(grid_size - 1);
    h = std::max(h, 0.5 * delta); // keep near-delta posteriors finite

    BinnedSamples bins = bin_samples(t, grid_size);

    // kernel values at integer grid offsets, truncated at 6 h
    int support = std::min(2 * (grid_size - 1), static_cast<int>(std::ceil(6.0 * h / delta)));
    std::vector<double> kernel(support + 1);
    for (int k = 0; k <= support; ++k) {
        double u = static_cast<double>(k) * delta / h;
        kernel[k] = kInvSqrt2Pi / h * std::exp(-0.5 * u * u);
    }

    KdeResult out;
    out.bandwidth = h * range;
    out.grid.resize(grid_size);
    out.density.assign(grid_size, 0.0);
    for (int g = 0; g < grid_size; ++g) out.grid[g] = lo + range * g * delta;

    const int G = grid_size;
    for (int b = 0; b < G; ++b) {
        double w = bins.weight[b];
        if (w == 0.0) continue;
        for (int g = std::max(0, b - support); g <= std::min(G - 1, b + support); ++g)
            out.density[g] += w * kernel[g - b > 0 ? g - b : b - g];
        // reflection about t = 0 puts mass at -t_b: grid offset g + b
        for (int g = 0; g + b <= support && g < G; ++g) out.density[g] += w * kernel[g + b];
        // reflection about t = 1 puts mass at 2 - t_b: offset g + b - 2(G-1)
        for (int g = G - 1; g >= 0; --g) {
            int off = 2 * (G - 1) - g - b;
            if (off > support) break;
            out.density[g] += w * kernel[off];
        }
    }
    double norm = 1.0 / (static_cast<double>(bins.n) * range);
    for (double& d : out.density) d *= norm;
    return out;
}

PosteriorSamples rejection_sample(const FlowModel& flow, std::span<const double> x,
                                  std::size_t n_target, const PriorSpec& spec, uint64_t seed) {
    if (n_target < 1000) throw ValidationError("rejection_sample: n_target must be >= 1000");
    const int d = flow.dim();
    PosteriorSamples out;
    out.space = flow.space();
    out.samples = Matrix(n_target, d);

    const std::size_t cap = 100 * n_target;
    std::size_t accepted = 0, attempted = 0, round = 0;
    while (accepted < n_target && attempted < cap) {
        // size batches from the running acceptance estimate with a small
        // margin; the first batch assumes most draws land in support
        double acc_est = attempted == 0
                             ? 0.9
                             : std::max(0.05, static_cast<double>(accepted) /
                                                  static_cast<double>(attempted));
        auto want = static_cast<std::size_t>(
            std::ceil(1.1 * static_cast<double>(n_target - accepted) / acc_est));
        std::size_t batch = std::min<std::size_t>(std::max<std::size_t>(want, 2048),
                                                  cap - attempted);
        Matrix draw = flow.sample(x, batch, splitmix64(seed + 0x9e37 * (round + 1)));
        ++round;
        for (std::size_t r = 0; r < batch && accepted < n_target; ++r) {
            ++attempted;
            if (in_support(spec, draw.row_span(r))) {
                std::copy(draw.row(r), draw.row(r) + d, out.samples.row(accepted));
                ++accepted;
            }
        }
    }
    out.accepted_fraction =
        attempted == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempted);
    if (accepted < n_target)
        throw LowAcceptanceError(
            "rejection sampling accepted " + std::to_string(accepted) + " of " +
                std::to_string(attempted) + " draws (" +
                std::to_string(100.0 * out.accepted_fraction) +
                "%); observation badly mismatched to the trained model",
            out.accepted_fraction);
    return out;
}

namespace {

struct WeightedEm {
    const std::vector<double>& t; // grid nodes in [0, 1]
    const std::vector<double>& w; // counts
    double total;

    MixtureFit run(double m1, double m2, double s1, double s2, double w1, int max_iter,
                   double tol, double sigma_floor) const {
        MixtureFit fit;
        double ll_prev = -1e300;
        std::vector<double> r1(t.size(), 0.0);
        for (int it = 0; it < max_iter; ++it) {
            double n1 = 0.0, n2 = 0.0, mu1 = 0.0, mu2 = 0.0, ll = 0.0;
            for (std::size_t b = 0; b < t.size(); ++b) {
                if (w[b] == 0.0) continue;
                double z1 = (t[b] - m1) / s1, z2 = (t[b] - m2) / s2;
                double p1 = w1 * kInvSqrt2Pi / s1 * std::exp(-0.5 * z1 * z1);
                double p2 = (1.0 - w1) * kInvSqrt2Pi / s2 * std::exp(-0.5 * z2 * z2);
                double denom = p1 + p2;
                double resp = denom > 0.0 ? p1 / denom : 0.5;
                r1[b] = resp;
                n1 += w[b] * resp;
                n2 += w[b] * (1.0 - resp);
                mu1 += w[b] * resp * t[b];
                mu2 += w[b] * (1.0 - resp) * t[b];
                ll += w[b] * std::log(std::max(denom, 1e-300));
            }
            if (n1 <= 0.0 || n2 <= 0.0) break;
            m1 = mu1 / n1;
            m2 = mu2 / n2;
            double v1 = 0.0, v2 = 0.0;
            for (std::size_t b = 0; b < t.size(); ++b) {
                if (w[b] == 0.0) continue;
                v1 += w[b] * r1[b] * (t[b] - m1) * (t[b] - m1);
                v2 += w[b] * (1.0 - r1[b]) * (t[b] - m2) * (t[b] - m2);
            }
            s1 = std::max(std::sqrt(v1 / n1), sigma_floor);
            s2 = std::max(std::sqrt(v2 / n2), sigma_floor);
            w1 = n1 / total;
            bool converged = std::fabs(ll - ll_prev) < tol;
            ll_prev = ll;
            if (converged) break;
        }
        fit.mean1 = m1;
        fit.std1 = s1;
        fit.mean2 = m2;
        fit.std2 = s2;
        fit.weight1 = w1;
        fit.log_likelihood = ll_prev;
        return fit;
    }
};

int count_local_maxima(const std::vector<double>& d) {
    // maxima = number of +/- sign changes of the discrete derivative,
    // counting a fall from the left edge or a rise into the right edge
    int maxima = 0;
    int prev_sign = 0;
    bool seen_slope = false;
    for (std::size_t i = 1; i < d.size(); ++i) {
        double diff = d[i] - d[i - 1];
        int sign = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
        if (sign == 0) continue;
        if (sign < 0 && (prev_sign > 0 || !seen_slope)) ++maxima;
        prev_sign = sign;
        seen_slope = true;
    }
    if (prev_sign > 0) ++maxima;
    return maxima;
}

} // namespace

DegeneracyResult detect_degeneracy(std::span<const double> samples, double lo, double hi,
                                   const DegeneracyOptions& opts) {
    opts.validate();
    if (samples.size() < 1000)
        throw ValidationError("detect_degeneracy: need at least 1000 samples, got " +
                              std::to_string(samples.size()));
    auto t = normalize_samples(samples, lo, hi);
    BinnedSamples bins = bin_samples(t, opts.grid_size);
    double delta = 1.0 / static_cast<double>(opts.grid_size - 1);
    std::vector<double> nodes(opts.grid_size);
    for (int g = 0; g < opts.grid_size; ++g) nodes[g] = g * delta;

    double total = static_cast<double>(bins.n);
    WeightedEm em{nodes, bins.weight, total};
    double sigma_floor = 0.25 * delta;

    Rng rng(opts.seed);
    MixtureFit best;
    best.log_likelihood = -1e300;
    for (int restart = 0; restart < opts.restarts; ++restart) {
        // k-means++-style start: first centre by weight, second by weighted
        // squared distance from the first
        double pick = rng.uniform() * total;
        double acc = 0.0;
        double c1 = nodes.back();
        for (int g = 0; g < opts.grid_size; ++g) {
            acc += bins.weight[g];
            if (acc >= pick) {
                c1 = nodes[g];
                break;
            }
        }
        double dist_total = 0.0;
        for (int g = 0; g < opts.grid_size; ++g)
            dist_total += bins.weight[g] * (nodes[g] - c1) * (nodes[g] - c1);
        double c2 = std::min(1.0, c1 + delta);
        if (dist_total > 0.0) {
            pick = rng.uniform() * dist_total;
            acc = 0.0;
            for (int g = 0; g < opts.grid_size; ++g) {
                acc += bins.weight[g] * (nodes[g] - c1) * (nodes[g] - c1);
                if (acc >= pick) {
                    c2 = nodes[g];
                    break;
                }
            }
        }
        for (int it = 0; it < 10; ++it) { // short weighted 2-means refinement
            double n1 = 0.0, n2 = 0.0, m1 = 0.0, m2 = 0.0;
            for (int g = 0; g < opts.grid_size; ++g) {
                if (bins.weight[g] == 0.0) continue;
                bool near1 = std::fabs(nodes[g] - c1) <= std::fabs(nodes[g] - c2);
                (near1 ? n1 : n2) += bins.weight[g];
                (near1 ? m1 : m2) += bins.weight[g] * nodes[g];
            }
            if (n1 > 0.0) c1 = m1 / n1;
            if (n2 > 0.0) c2 = m2 / n2;
        }
        double v1 = 0.0, v2 = 0.0, n1 = 0.0, n2 = 0.0;
        for (int g = 0; g < opts.grid_size; ++g) {
            if (bins.weight[g] == 0.0) continue;
            bool near1 = std::fabs(nodes[g] - c1) <= std::fabs(nodes[g] - c2);
            if (near1) {
                n1 += bins.weight[g];
                v1 += bins.weight[g] * (nodes[g] - c1) * (nodes[g] - c1);
            } else {
                n2 += bins.weight[g];
                v2 += bins.weight[g] * (nodes[g] - c2) * (nodes[g] - c2);
            }
        }
        double s1 = n1 > 0.0 ? std::max(std::sqrt(v1 / n1), sigma_floor) : sigma_floor;
        double s2 = n2 > 0.0 ? std::max(std::sqrt(v2 / n2), sigma_floor) : sigma_floor;
        double w1 = (n1 + n2) > 0.0 ? std::clamp(n1 / (n1 + n2), 0.02, 0.98) : 0.5;
        MixtureFit fit =
            em.run(c1, c2, s1, s2, w1, opts.max_iterations, opts.tolerance, sigma_floor);
        if (fit.log_likelihood > best.log_likelihood) best = fit;
    }

    std::vector<double> mix(opts.grid_size);
    for (int g = 0; g < opts.grid_size; ++g) {
        double z1 = (nodes[g] - best.mean1) / best.std1;
        double z2 = (nodes[g] - best.mean2) / best.std2;
        mix[g] = best.weight1 * kInvSqrt2Pi / best.std1 * std::exp(-0.5 * z1 * z1) +
                 (1.0 - best.weight1) * kInvSqrt2Pi / best.std2 * std::exp(-0.5 * z2 * z2);
    }
    int maxima = count_local_maxima(mix);
    bool separated = std::fabs(best.mean1 - best.mean2) > best.std1 + best.std2;

    DegeneracyResult res;
    res.degenerate = maxima > 1 && separated;
    double range = hi - lo;
    res.fit = best;
    res.fit.mean1 = lo + best.mean1 * range;
    res.fit.mean2 = lo + best.mean2 * range;
    res.fit.std1 = best.std1 * range;
    res.fit.std2 = best.std2 * range;
    return res;
}

ParameterSummary summarize_marginal(std::span<const double> samples, double lo, double hi,
                                    const SummaryOptions& opts) {
    if (samples.empty()) throw ValidationError("summarize_marginal: no samples");
    ParameterSummary out;
    KdeResult kde = kde_density(samples, lo, hi, opts.grid_size, opts.bandwidth);
    const int G = opts.grid_size;
    const double range = hi - lo;
    const double scale = static_cast<double>(G - 1);

    int argmax = 0;
    for (int g = 1; g < G; ++g)
        if (kde.density[g] > kde.density[argmax]) argmax = g;
    out.map = kde.grid[argmax];

    // uncertainty: IQR of the half of the samples with the highest density
    auto t = normalize_samples(samples, lo, hi);
    std::vector<double> dens_at(samples.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        double pos = t[i] * scale;
        int g0 = std::min(G - 2, static_cast<int>(pos));
        double frac = pos - g0;
        dens_at[i] = kde.density[g0] * (1.0 - frac) + kde.density[g0 + 1] * frac;
    }
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t keep = (samples.size() + 1) / 2;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return dens_at[a] > dens_at[b]; });
    std::vector<double> top;
    top.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) top.push_back(samples[idx[i]]);
    std::sort(top.begin(), top.end());
    double iqr = quantile_sorted(top, 0.75) - quantile_sorted(top, 0.25);
    out.uncertainty_pct = 100.0 * iqr / range;

    // ambiguity: FWHM between the outermost half-maximum crossings
    double half = kde.density[argmax] * 0.5;
    int left = 0;
    while (left < G && kde.density[left] < half) ++left;
    int right = G - 1;
    while (right >= 0 && kde.density[right] < half) --right;
    double t_left = static_cast<double>(left);
    if (left > 0 && kde.density[left] != kde.density[left - 1])
        t_left = left - (kde.density[left] - half) / (kde.density[left] - kde.density[left - 1]);
    double t_right = static_cast<double>(right);
    if (right < G - 1 && kde.density[right] != kde.density[right + 1])
        t_right =
            right + (kde.density[right] - half) / (kde.density[right] - kde.density[right + 1]);
    out.ambiguity_pct = 100.0 * (t_right - t_left) / scale;

    if (samples.size() >= 1000) {
        DegeneracyResult deg = detect_degeneracy(samples, lo, hi, opts.degeneracy);
        out.degenerate = deg.degenerate;
        out.mixture = deg.fit;
    }
    return out;
}

PosteriorSummary summarize(const PosteriorSamples& samples, const SummaryOptions& opts) {
    if (samples.samples.rows == 0) throw ValidationError("summarize: no samples");
    PosteriorSummary out;
    const int d = static_cast<int>(samples.samples.cols);
    std::vector<double> column(samples.samples.rows);
    for (int j = 0; j < d; ++j) {
        for (std::size_t r = 0; r < samples.samples.rows; ++r) column[r] = samples.samples(r, j);
        out.params.push_back(
            summarize_marginal(column, samples.space.lower[j], samples.space.upper[j], opts));
    }
    return out;
}

} // namespace mupost
