#ifndef MUPOST_MAT_HPP
#define MUPOST_MAT_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "mupost/errors.hpp"

namespace mupost {

/// Dense row-major matrix of doubles. Deliberately minimal: the library
/// only needs storage plus a handful of tight kernels below.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool empty() const { return rows == 0 || cols == 0; }
};

/// Y[b,:] += X[b,:] * W, with W stored as [in x out]. Y must be pre-filled
/// (typically with the bias) by the caller. Batch rows are tiled so each
/// weight row streams through cache once per tile rather than once per
/// sample.
inline void gemm_acc(const double* X, std::size_t B, std::size_t in,
                     const double* W, std::size_t out, double* Y) {
    constexpr std::size_t kTile = 64;
    for (std::size_t b0 = 0; b0 < B; b0 += kTile) {
        std::size_t b1 = std::min(B, b0 + kTile);
        for (std::size_t k = 0; k < in; ++k) {
            const double* w = W + k * out;
            for (std::size_t b = b0; b < b1; ++b) {
                double a = X[b * in + k];
                if (a == 0.0) continue;
                double* y = Y + b * out;
                for (std::size_t j = 0; j < out; ++j) y[j] += a * w[j];
            }
        }
    }
}

/// dX[b,:] += dY[b,:] * W^T for W stored [in x out].
inline void gemm_acc_wt(const double* dY, std::size_t B, std::size_t out,
                        const double* W, std::size_t in, double* dX) {
    constexpr std::size_t kTile = 64;
    for (std::size_t b0 = 0; b0 < B; b0 += kTile) {
        std::size_t b1 = std::min(B, b0 + kTile);
        for (std::size_t k = 0; k < in; ++k) {
            const double* w = W + k * out;
            for (std::size_t b = b0; b < b1; ++b) {
                const double* dy = dY + b * out;
                double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                std::size_t j = 0;
                for (; j + 4 <= out; j += 4) {
                    a0 += dy[j] * w[j];
                    a1 += dy[j + 1] * w[j + 1];
                    a2 += dy[j + 2] * w[j + 2];
                    a3 += dy[j + 3] * w[j + 3];
                }
                for (; j < out; ++j) a0 += dy[j] * w[j];
                dX[b * in + k] += (a0 + a1) + (a2 + a3);
            }
        }
    }
}

/// gW += X^T * dY, X is [B x in], dY is [B x out], gW is [in x out].
inline void gemm_acc_grad(const double* X, const double* dY, std::size_t B,
                          std::size_t in, std::size_t out, double* gW) {
    for (std::size_t k = 0; k < in; ++k) {
        double* g = gW + k * out;
        for (std::size_t b = 0; b < B; ++b) {
            double a = X[b * in + k];
            if (a == 0.0) continue;
            const double* dy = dY + b * out;
            for (std::size_t j = 0; j < out; ++j) g[j] += a * dy[j];
        }
    }
}

inline void check_dims(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw ValidationError(std::string(what) + ": dimension mismatch (got " +
                              std::to_string(got) + ", expected " + std::to_string(want) + ")");
}

} // namespace mupost

#endif
