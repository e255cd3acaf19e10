#pragma once

// Shared plumbing: error type, dense matrix, seeded RNG derivation and
// the float formatting used by every text artifact.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace otfuse {

/// Error carrying the "module.operation" that failed; the message is
/// always "<context>: <detail>" so CLI diagnostics can name the origin.
class Error : public std::runtime_error {
public:
    Error(const std::string& context, const std::string& detail)
        : std::runtime_error(context + ": " + detail), context_(context) {}

    const std::string& context() const { return context_; }

private:
    std::string context_;
};

/// Dense row-major matrix of doubles. All linear algebra in this project
/// runs on small matrices (layer widths, vocab sizes), so a flat vector
/// with bounds implied by rows/cols is all we need.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

/// y = M x
inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += m(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

/// C = A B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// --- randomness -------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Every consumer of randomness derives its own stream from one root
/// seed and a purpose tag, so a single CLI --seed pins the whole run.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return splitmix64(root ^ h);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution objects so the stream is
    // identical across standard libraries.
    double u = (rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// --- text formatting ---------------------------------------------------

/// 17 significant digits: enough to round-trip any IEEE double exactly.
inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Shorter form for human-facing values (costs, scores) in artifacts.
inline std::string fmt_g12(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

}  // namespace otfuse
