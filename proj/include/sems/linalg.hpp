#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sems {

using Vector = std::vector<double>;

/// Dense row-major matrix, sized for the small systems used throughout
/// (state-space models, ridge normal equations, plan trajectories).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool empty() const { return rows == 0 || cols == 0; }
};

inline Vector matvec(const Matrix& m, const Vector& v) {
    if (static_cast<int>(v.size()) != m.cols)
        throw std::invalid_argument("matvec: dimension mismatch (" + std::to_string(v.size()) +
                                    " vs " + std::to_string(m.cols) + " cols)");
    Vector out(m.rows, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += m(r, c) * v[c];
        out[r] = s;
    }
    return out;
}

inline Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) throw std::invalid_argument("matmul: dimension mismatch");
    Matrix out(x.rows, y.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x(r, k);
            if (xv == 0.0) continue;
            for (int c = 0; c < y.cols; ++c) out(r, c) += xv * y(k, c);
        }
    return out;
}

inline Vector axpy(double alpha, const Vector& x, const Vector& y) {
    Vector out(y);
    for (size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
    return out;
}

inline double inf_norm(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Solve M x = b for symmetric positive-definite M by Cholesky factorisation.
/// Throws if a pivot falls below spd_tol (matrix not SPD within tolerance).
inline Vector cholesky_solve(const Matrix& m, const Vector& b, double spd_tol = 1e-12) {
    if (m.rows != m.cols) throw std::invalid_argument("cholesky_solve: matrix not square");
    if (static_cast<int>(b.size()) != m.rows) throw std::invalid_argument("cholesky_solve: rhs size mismatch");
    const int n = m.rows;
    for (int r = 0; r < n; ++r)
        for (int c = r + 1; c < n; ++c)
            if (std::abs(m(r, c) - m(c, r)) > 1e-9 * (1.0 + std::abs(m(r, c))))
                throw std::invalid_argument("cholesky_solve: matrix not symmetric");

    // lower-triangular factor L with M = L L^T
    Matrix l(n, n);
    for (int j = 0; j < n; ++j) {
        double d = m(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= spd_tol) throw std::runtime_error("cholesky_solve: matrix not positive definite (pivot " +
                                                   std::to_string(d) + " at " + std::to_string(j) + ")");
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    // forward then backward substitution
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vector x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

}  // namespace sems
