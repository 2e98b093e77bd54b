#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ctdqn {

using Vec = std::vector<double>;

/// Dense row-major matrix. Iteration order in every product is row, then
/// ascending column, so results are bit-reproducible.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    size_t size() const { return data.size(); }
};

inline void matvec_into(const Matrix& m, const Vec& x, Vec& out) {
    if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: size mismatch");
    out.assign(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* row = m.data.data() + static_cast<size_t>(i) * m.cols;
        for (int j = 0; j < m.cols; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

inline Vec matvec(const Matrix& m, const Vec& x) {
    Vec out;
    matvec_into(m, x, out);
    return out;
}

/// out = m^T x, accumulated in row order of m.
inline void matvec_transpose_into(const Matrix& m, const Vec& x, Vec& out) {
    if (static_cast<int>(x.size()) != m.rows) throw std::invalid_argument("matvecT: size mismatch");
    out.assign(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        const double* row = m.data.data() + static_cast<size_t>(i) * m.cols;
        for (int j = 0; j < m.cols; ++j) out[j] += row[j] * xi;
    }
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

inline double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace ctdqn
