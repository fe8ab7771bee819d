#include <cmath>

#include "mupost/errors.hpp"
#include "mupost/flow.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {

constexpr double kLogScaleBound = 7.0;

inline double soft_clamp(double v) { return kLogScaleBound * std::tanh(v / kLogScaleBound); }
inline double soft_clamp_deriv(double s) { return 1.0 - (s / kLogScaleBound) * (s / kLogScaleBound); }

void uniform_init(double* w, std::size_t n, double bound, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
}

inline void add_bias_rows(const double* b, std::size_t B, std::size_t n, double* Y) {
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < n; ++j) Y[r * n + j] = b[j];
}

inline void tanh_inplace(double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
}

} // namespace

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::identity(int dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    return s;
}

Standardizer Standardizer::from_columns(const Matrix& data) {
    Standardizer s;
    s.mean.assign(data.cols, 0.0);
    s.scale.assign(data.cols, 1.0);
    if (data.rows == 0) return s;
    for (std::size_t j = 0; j < data.cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < data.rows; ++i) acc += data(i, j);
        s.mean[j] = acc / static_cast<double>(data.rows);
    }
    for (std::size_t j = 0; j < data.cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < data.rows; ++i) {
            double d = data(i, j) - s.mean[j];
            acc += d * d;
        }
        double sd = std::sqrt(acc / static_cast<double>(data.rows));
        // constant columns standardize to zero rather than blowing up
        s.scale[j] = sd < 1e-10 ? 1.0 : sd;
    }
    return s;
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean[i]) / scale[i];
}

void Standardizer::invert(std::span<const double> in, std::span<double> out) const {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * scale[i] + mean[i];
}

double Standardizer::log_jacobian() const {
    double acc = 0.0;
    for (double s : scale) acc += std::log(s);
    return acc;
}

// ---------------------------------------------------------------------------
// MadeBlock

void MadeBlock::Work::resize(std::size_t B, int dim, int cond_dim, int hidden) {
    if (u.rows == B && u.cols == static_cast<std::size_t>(dim + cond_dim) &&
        h1.cols == static_cast<std::size_t>(hidden))
        return; // shapes unchanged: reuse buffers across batches
    u = Matrix(B, dim + cond_dim);
    h1 = Matrix(B, hidden);
    h2 = Matrix(B, hidden);
    o = Matrix(B, 2 * dim);
    s = Matrix(B, dim);
    expns = Matrix(B, dim);
    z = Matrix(B, dim);
    dh1 = Matrix(B, hidden);
    dh2 = Matrix(B, hidden);
    dout = Matrix(B, 2 * dim);
    du = Matrix(B, dim + cond_dim);
}

void MadeBlock::init(ParamStore& store, int d, int c, int h, Rng& rng) {
    dim = d;
    cond_dim = c;
    hidden = h;
    hidden_deg.resize(h);
    for (int k = 0; k < h; ++k)
        hidden_deg[k] = d >= 2 ? 1 + (k * (d - 1)) / h : 0;

    w1 = store.add(static_cast<std::size_t>(d + c) * h);
    b1 = store.add(h);
    w2 = store.add(static_cast<std::size_t>(h) * h);
    b2 = store.add(h);
    w3 = store.add(static_cast<std::size_t>(h) * 2 * d);
    b3 = store.add(2 * d);
    w3c = store.add(static_cast<std::size_t>(c) * 2 * d);

    mask1.assign(static_cast<std::size_t>(d) * h, 0.0);
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < h; ++k) mask1[j * h + k] = hidden_deg[k] >= j + 1 ? 1.0 : 0.0;
    mask2.assign(static_cast<std::size_t>(h) * h, 0.0);
    for (int k = 0; k < h; ++k)
        for (int k2 = 0; k2 < h; ++k2) mask2[k * h + k2] = hidden_deg[k2] >= hidden_deg[k] ? 1.0 : 0.0;
    mask3.assign(static_cast<std::size_t>(h) * 2 * d, 0.0);
    for (int k = 0; k < h; ++k)
        for (int i = 0; i < d; ++i) {
            double m = (i + 1) > hidden_deg[k] ? 1.0 : 0.0;
            mask3[k * 2 * d + 2 * i] = m;
            mask3[k * 2 * d + 2 * i + 1] = m;
        }

    // hidden layers random (then masked), output layers zero: a freshly
    // built block is the identity transform
    uniform_init(store.w(w1), static_cast<std::size_t>(d + c) * h,
                 1.0 / std::sqrt(static_cast<double>(d + c)), rng);
    uniform_init(store.w(w2), static_cast<std::size_t>(h) * h,
                 1.0 / std::sqrt(static_cast<double>(h)), rng);
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < h; ++k) store.w(w1)[j * h + k] *= mask1[j * h + k];
    for (std::size_t i = 0; i < mask2.size(); ++i) store.w(w2)[i] *= mask2[i];
}

void MadeBlock::mask_gradients(ParamStore& store) const {
    double* g1 = store.g(w1);
    for (int j = 0; j < dim; ++j)
        for (int k = 0; k < hidden; ++k) g1[j * hidden + k] *= mask1[j * hidden + k];
    double* g2 = store.g(w2);
    for (std::size_t i = 0; i < mask2.size(); ++i) g2[i] *= mask2[i];
    double* g3 = store.g(w3);
    for (std::size_t i = 0; i < mask3.size(); ++i) g3[i] *= mask3[i];
}

void MadeBlock::forward(const ParamStore& store, const Matrix& theta, const Matrix& cond,
                        Work& work, std::vector<double>& logdet_acc) const {
    const std::size_t B = theta.rows;
    const int D = dim, C = cond_dim, H = hidden;
    work.resize(B, D, C, H);
    for (std::size_t r = 0; r < B; ++r) {
        std::copy(theta.row(r), theta.row(r) + D, work.u.row(r));
        std::copy(cond.row(r), cond.row(r) + C, work.u.row(r) + D);
    }
    add_bias_rows(store.w(b1), B, H, work.h1.data.data());
    gemm_acc(work.u.data.data(), B, D + C, store.w(w1), H, work.h1.data.data());
    tanh_inplace(work.h1.data.data(), B * H);

    add_bias_rows(store.w(b2), B, H, work.h2.data.data());
    gemm_acc(work.h1.data.data(), B, H, store.w(w2), H, work.h2.data.data());
    tanh_inplace(work.h2.data.data(), B * H);

    add_bias_rows(store.w(b3), B, 2 * D, work.o.data.data());
    gemm_acc(work.h2.data.data(), B, H, store.w(w3), 2 * D, work.o.data.data());
    gemm_acc(cond.data.data(), B, C, store.w(w3c), 2 * D, work.o.data.data());

    for (std::size_t r = 0; r < B; ++r) {
        const double* o = work.o.row(r);
        const double* th = theta.row(r);
        double* s = work.s.row(r);
        double* en = work.expns.row(r);
        double* z = work.z.row(r);
        double ld = 0.0;
        for (int i = 0; i < D; ++i) {
            double shift = o[2 * i];
            s[i] = soft_clamp(o[2 * i + 1]);
            en[i] = std::exp(-s[i]);
            z[i] = (th[i] - shift) * en[i];
            ld -= s[i];
        }
        logdet_acc[r] += ld;
    }
}

void MadeBlock::backward(ParamStore& store, const Work& work, const Matrix& dz, Matrix& dtheta,
                         Matrix& dcond, bool with_direct_logdet) const {
    const std::size_t B = dz.rows;
    const int D = dim, C = cond_dim, H = hidden;
    Work& w = const_cast<Work&>(work); // scratch reuse; forward data untouched

    // output-layer gradient: shift and (pre-clamp) log-scale slots
    for (std::size_t r = 0; r < B; ++r) {
        const double* g = dz.row(r);
        const double* s = work.s.row(r);
        const double* en = work.expns.row(r);
        const double* z = work.z.row(r);
        double* dout = w.dout.row(r);
        double* dth = dtheta.row(r);
        for (int i = 0; i < D; ++i) {
            double ds = -g[i] * z[i];
            if (with_direct_logdet) ds += 1.0; // from +sum(s) in the NLL
            dout[2 * i] = -g[i] * en[i];
            dout[2 * i + 1] = ds * soft_clamp_deriv(s[i]);
            dth[i] = g[i] * en[i]; // direct path through z_i
        }
    }

    // output layer: gW3 += h2^T dout, gW3c += cond^T dout, dcond += dout W3c^T
    gemm_acc_grad(work.h2.data.data(), w.dout.data.data(), B, H, 2 * D, store.g(w3));
    for (std::size_t r = 0; r < B; ++r) {
        const double* c = work.u.row(r) + D; // cond columns live after the theta part
        const double* dov = w.dout.row(r);
        for (int k = 0; k < C; ++k) {
            double a = c[k];
            double* g = store.g(w3c) + static_cast<std::size_t>(k) * 2 * D;
            for (int j = 0; j < 2 * D; ++j) g[j] += a * dov[j];
        }
        double* dc = dcond.row(r);
        for (int k = 0; k < C; ++k) {
            const double* wrow = store.w(w3c) + static_cast<std::size_t>(k) * 2 * D;
            double acc = 0.0;
            for (int j = 0; j < 2 * D; ++j) acc += dov[j] * wrow[j];
            dc[k] += acc;
        }
    }
    for (std::size_t r = 0; r < B; ++r) {
        const double* dov = w.dout.row(r);
        double* gb = store.g(b3);
        for (int j = 0; j < 2 * D; ++j) gb[j] += dov[j];
    }
    w.dh2.fill(0.0);
    gemm_acc_wt(w.dout.data.data(), B, 2 * D, store.w(w3), H, w.dh2.data.data());

    // second hidden layer
    for (std::size_t r = 0; r < B; ++r) {
        const double* h2v = work.h2.row(r);
        double* d2 = w.dh2.row(r);
        for (int k = 0; k < H; ++k) d2[k] *= 1.0 - h2v[k] * h2v[k];
    }
    gemm_acc_grad(work.h1.data.data(), w.dh2.data.data(), B, H, H, store.g(w2));
    for (std::size_t r = 0; r < B; ++r) {
        const double* d2 = w.dh2.row(r);
        double* gb = store.g(b2);
        for (int k = 0; k < H; ++k) gb[k] += d2[k];
    }
    w.dh1.fill(0.0);
    gemm_acc_wt(w.dh2.data.data(), B, H, store.w(w2), H, w.dh1.data.data());

    // first hidden layer
    for (std::size_t r = 0; r < B; ++r) {
        const double* h1v = work.h1.row(r);
        double* d1 = w.dh1.row(r);
        for (int k = 0; k < H; ++k) d1[k] *= 1.0 - h1v[k] * h1v[k];
    }
    gemm_acc_grad(work.u.data.data(), w.dh1.data.data(), B, D + C, H, store.g(w1));
    for (std::size_t r = 0; r < B; ++r) {
        const double* d1 = w.dh1.row(r);
        double* gb = store.g(b1);
        for (int k = 0; k < H; ++k) gb[k] += d1[k];
    }
    w.du.fill(0.0);
    gemm_acc_wt(w.dh1.data.data(), B, H, store.w(w1), D + C, w.du.data.data());

    for (std::size_t r = 0; r < B; ++r) {
        const double* du = w.du.row(r);
        double* dth = dtheta.row(r);
        double* dc = dcond.row(r);
        for (int i = 0; i < D; ++i) dth[i] += du[i];
        for (int k = 0; k < C; ++k) dc[k] += du[D + k];
    }
    mask_gradients(store);
}

void MadeBlock::inverse(const ParamStore& store, const Matrix& z, const Matrix& cond,
                        Matrix& theta) const {
    const std::size_t B = z.rows;
    const int D = dim, C = cond_dim, H = hidden;
    theta = Matrix(B, D, 0.0);

    // degree boundaries in the (ascending) hidden degree array
    std::vector<int> deg_end(D + 1, 0); // deg_end[g] = first index with degree > g
    {
        int k = 0;
        for (int g = 0; g <= D; ++g) {
            while (k < H && hidden_deg[k] <= g) ++k;
            deg_end[g] = k;
        }
    }

    // conditioning-driven parts, reused across degree steps
    Matrix h1pre(B, H), h2pre(B, H), h1(B, H, 0.0), h2(B, H, 0.0);
    add_bias_rows(store.w(b1), B, H, h1pre.data.data());
    gemm_acc(cond.data.data(), B, C, store.w(w1) + static_cast<std::size_t>(D) * H, H,
             h1pre.data.data());
    add_bias_rows(store.w(b2), B, H, h2pre.data.data());

    Matrix o_base(B, 2 * D); // bias + direct conditioning contribution
    add_bias_rows(store.w(b3), B, 2 * D, o_base.data.data());
    gemm_acc(cond.data.data(), B, C, store.w(w3c), 2 * D, o_base.data.data());

    const double* W1 = store.w(w1);
    const double* W2 = store.w(w2);
    const double* W3 = store.w(w3);
    int h1_done = 0, h2_done = 0;
    for (int pos = 0; pos < D; ++pos) {
        int usable = deg_end[pos]; // hidden degree <= pos (output degree pos+1 is strict)
        int new_h1_lo = h1_done, new_h2_lo = h2_done;
        h1_done = std::max(h1_done, usable);
        h2_done = std::max(h2_done, usable);

        for (std::size_t r = 0; r < B; ++r) {
            const double* th = theta.row(r);
            double* h1r = h1.row(r);
            double* h2r = h2.row(r);
            // finalize newly computable h1 units (inputs 0..pos-1 are set;
            // weights from inputs of higher degree are masked to zero)
            for (int k = new_h1_lo; k < usable; ++k) {
                double acc = h1pre(r, k);
                for (int j = 0; j < pos; ++j) acc += th[j] * W1[j * H + k];
                h1r[k] = std::tanh(acc);
            }
            // h2 units of the same degrees (they see h1 of lower-or-equal degree)
            for (int k = new_h2_lo; k < usable; ++k) {
                double acc = h2pre(r, k);
                for (int j = 0; j < usable; ++j) acc += h1r[j] * W2[j * H + k];
                h2r[k] = std::tanh(acc);
            }
            double shift = o_base(r, 2 * pos);
            double sraw = o_base(r, 2 * pos + 1);
            for (int k = 0; k < usable; ++k) {
                shift += h2r[k] * W3[k * 2 * D + 2 * pos];
                sraw += h2r[k] * W3[k * 2 * D + 2 * pos + 1];
            }
            double s = soft_clamp(sraw);
            theta(r, pos) = z(r, pos) * std::exp(s) + shift;
        }
    }
}

// ---------------------------------------------------------------------------
// Mlp

void Mlp::Work::resize(std::size_t B, const Mlp& mlp) {
    if (a1.rows == B && a1.cols == static_cast<std::size_t>(mlp.h1) &&
        y.cols == static_cast<std::size_t>(mlp.out))
        return;
    a1 = Matrix(B, mlp.h1);
    a2 = Matrix(B, mlp.h2);
    y = Matrix(B, mlp.out);
    da1 = Matrix(B, mlp.h1);
    da2 = Matrix(B, mlp.h2);
}

void Mlp::init(ParamStore& store, int in_, int h1_, int h2_, int out_, Rng& rng) {
    in = in_;
    h1 = h1_;
    h2 = h2_;
    out = out_;
    w1 = store.add(static_cast<std::size_t>(in) * h1);
    b1 = store.add(h1);
    w2 = store.add(static_cast<std::size_t>(h1) * h2);
    b2 = store.add(h2);
    w3 = store.add(static_cast<std::size_t>(h2) * out);
    b3 = store.add(out);
    uniform_init(store.w(w1), static_cast<std::size_t>(in) * h1, std::sqrt(6.0 / (in + h1)), rng);
    uniform_init(store.w(w2), static_cast<std::size_t>(h1) * h2, std::sqrt(6.0 / (h1 + h2)), rng);
    uniform_init(store.w(w3), static_cast<std::size_t>(h2) * out, std::sqrt(6.0 / (h2 + out)), rng);
}

void Mlp::forward(const ParamStore& store, const Matrix& x, Work& work) const {
    const std::size_t B = x.rows;
    work.resize(B, *this);
    add_bias_rows(store.w(b1), B, h1, work.a1.data.data());
    gemm_acc(x.data.data(), B, in, store.w(w1), h1, work.a1.data.data());
    tanh_inplace(work.a1.data.data(), B * h1);
    add_bias_rows(store.w(b2), B, h2, work.a2.data.data());
    gemm_acc(work.a1.data.data(), B, h1, store.w(w2), h2, work.a2.data.data());
    tanh_inplace(work.a2.data.data(), B * h2);
    add_bias_rows(store.w(b3), B, out, work.y.data.data());
    gemm_acc(work.a2.data.data(), B, h2, store.w(w3), out, work.y.data.data());
}

void Mlp::backward(ParamStore& store, const Matrix& x, const Work& work, const Matrix& dy) const {
    const std::size_t B = x.rows;
    Work& w = const_cast<Work&>(work);
    gemm_acc_grad(work.a2.data.data(), dy.data.data(), B, h2, out, store.g(w3));
    for (std::size_t r = 0; r < B; ++r) {
        const double* d = dy.row(r);
        double* gb = store.g(b3);
        for (int j = 0; j < out; ++j) gb[j] += d[j];
    }
    w.da2.fill(0.0);
    gemm_acc_wt(dy.data.data(), B, out, store.w(w3), h2, w.da2.data.data());
    for (std::size_t r = 0; r < B; ++r) {
        const double* a = work.a2.row(r);
        double* d = w.da2.row(r);
        for (int j = 0; j < h2; ++j) d[j] *= 1.0 - a[j] * a[j];
    }
    gemm_acc_grad(work.a1.data.data(), w.da2.data.data(), B, h1, h2, store.g(w2));
    for (std::size_t r = 0; r < B; ++r) {
        const double* d = w.da2.row(r);
        double* gb = store.g(b2);
        for (int j = 0; j < h2; ++j) gb[j] += d[j];
    }
    w.da1.fill(0.0);
    gemm_acc_wt(w.da2.data.data(), B, h2, store.w(w2), h1, w.da1.data.data());
    for (std::size_t r = 0; r < B; ++r) {
        const double* a = work.a1.row(r);
        double* d = w.da1.row(r);
        for (int j = 0; j < h1; ++j) d[j] *= 1.0 - a[j] * a[j];
    }
    gemm_acc_grad(x.data.data(), w.da1.data.data(), B, in, h1, store.g(w1));
    for (std::size_t r = 0; r < B; ++r) {
        const double* d = w.da1.row(r);
        double* gb = store.g(b1);
        for (int j = 0; j < h1; ++j) gb[j] += d[j];
    }
}

} // namespace mupost
