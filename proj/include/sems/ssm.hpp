#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sems/linalg.hpp"

namespace sems {

/// Discrete-time linear demand model
///   x[i+1] = A x[i] + sum_q B[q] u[q][i] + sum_ex E[ex] d[ex][i],   y[i] = C x[i]
/// with one B column per energy-type input and one E column per disturbance type.
struct StateSpaceModel {
    Matrix A;                                   // n x n
    std::vector<Vector> B;                      // n_inputs columns of length n
    std::vector<std::string> input_names;       // energy type q per B column
    std::vector<Vector> E;                      // n_dist columns of length n
    std::vector<std::string> disturbance_names; // disturbance type ex per E column
    Matrix C;                                   // r x n
    std::vector<std::string> state_names;
    std::vector<std::string> output_names;
    int dt_minutes = 15;

    int order() const { return A.rows; }
    int n_inputs() const { return static_cast<int>(B.size()); }
    int n_disturbances() const { return static_cast<int>(E.size()); }
    int n_outputs() const { return C.rows; }

    void check_dimensions() const {
        if (A.rows != A.cols) throw std::invalid_argument("StateSpaceModel: A not square");
        for (const auto& b : B)
            if (static_cast<int>(b.size()) != A.rows) throw std::invalid_argument("StateSpaceModel: B column size mismatch");
        for (const auto& e : E)
            if (static_cast<int>(e.size()) != A.rows) throw std::invalid_argument("StateSpaceModel: E column size mismatch");
        if (C.cols != A.rows) throw std::invalid_argument("StateSpaceModel: C column count mismatch");
        if (input_names.size() != B.size()) throw std::invalid_argument("StateSpaceModel: input name per B column required");
        if (disturbance_names.size() != E.size()) throw std::invalid_argument("StateSpaceModel: disturbance name per E column required");
    }
};

/// One step of the recursion. u has one entry per model input, d one per disturbance type
/// (multiple physical sources of the same type are summed before the call).
inline std::pair<Vector, Vector> simulate_step(const StateSpaceModel& model, const Vector& x,
                                               const Vector& u, const Vector& d) {
    if (static_cast<int>(x.size()) != model.order()) throw std::invalid_argument("simulate_step: state size mismatch");
    if (static_cast<int>(u.size()) != model.n_inputs()) throw std::invalid_argument("simulate_step: input size mismatch");
    if (static_cast<int>(d.size()) != model.n_disturbances()) throw std::invalid_argument("simulate_step: disturbance size mismatch");
    Vector xn = matvec(model.A, x);
    for (int q = 0; q < model.n_inputs(); ++q)
        for (int r = 0; r < model.order(); ++r) xn[r] += model.B[q][r] * u[q];
    for (int ex = 0; ex < model.n_disturbances(); ++ex)
        for (int r = 0; r < model.order(); ++r) xn[r] += model.E[ex][r] * d[ex];
    return {std::move(xn), matvec(model.C, x)};
}

/// Run the recursion for U.cols steps. Returns X with N+1 columns (x[0]..x[N]) and
/// Y with N columns (y[i] = C x[i], i = 0..N-1).
inline std::pair<Matrix, Matrix> simulate_horizon(const StateSpaceModel& model, const Vector& x0,
                                                  const Matrix& u, const Matrix& d) {
    const int n_steps = u.cols;
    if (u.rows != model.n_inputs()) throw std::invalid_argument("simulate_horizon: input row count mismatch");
    if (model.n_disturbances() > 0 && d.cols != n_steps) throw std::invalid_argument("simulate_horizon: disturbance length mismatch");
    if (d.rows != model.n_disturbances()) throw std::invalid_argument("simulate_horizon: disturbance row count mismatch");
    Matrix xs(model.order(), n_steps + 1);
    Matrix ys(model.n_outputs(), n_steps);
    Vector x = x0;
    for (int i = 0; i < n_steps; ++i) {
        Vector ui(model.n_inputs()), di(model.n_disturbances());
        for (int q = 0; q < u.rows; ++q) ui[q] = u(q, i);
        for (int ex = 0; ex < d.rows; ++ex) di[ex] = d(ex, i);
        for (int r = 0; r < model.order(); ++r) xs(r, i) = x[r];
        auto [xn, y] = simulate_step(model, x, ui, di);
        for (int r = 0; r < model.n_outputs(); ++r) ys(r, i) = y[r];
        x = std::move(xn);
    }
    for (int r = 0; r < model.order(); ++r) xs(r, n_steps) = x[r];
    return {std::move(xs), std::move(ys)};
}

/// Measured single-output history used for identification: aligned samples of the
/// output, each input channel and each disturbance channel.
struct IoHistory {
    Vector y;
    std::vector<Vector> u;
    std::vector<std::string> input_names;
    std::vector<Vector> d;
    std::vector<std::string> disturbance_names;

    int length() const { return static_cast<int>(y.size()); }
};

struct IdentifyResult {
    StateSpaceModel model;
    double holdout_rmse = 0.0;  // one-step-ahead RMSE on the chronological last 20%
};

namespace detail {

inline void build_arx_row(const IoHistory& h, int t, int order, Vector& row) {
    row.clear();
    for (int k = 1; k <= order; ++k) row.push_back(h.y[t - k]);
    for (const auto& u : h.u)
        for (int k = 1; k <= order; ++k) row.push_back(u[t - k]);
    for (const auto& d : h.d)
        for (int k = 1; k <= order; ++k) row.push_back(d[t - k]);
}

}  // namespace detail

/// Fit an order-n ARX model by ridge regression ((X'X + lambda I) theta = X'y, solved
/// by cholesky_solve) and realise it in observable companion form. The chronological
/// last 20% of the history is held out and only used for the reported one-step RMSE.
inline IdentifyResult identify_ridge(const IoHistory& history, int order, double lambda,
                                     int dt_minutes = 15) {
    if (order < 1) throw std::invalid_argument("identify_ridge: order must be >= 1");
    if (lambda < 0) throw std::invalid_argument("identify_ridge: lambda must be >= 0");
    for (const auto& u : history.u)
        if (u.size() != history.y.size()) throw std::invalid_argument("identify_ridge: input length mismatch");
    for (const auto& d : history.d)
        if (d.size() != history.y.size()) throw std::invalid_argument("identify_ridge: disturbance length mismatch");

    const int t_total = history.length();
    const int n_u = static_cast<int>(history.u.size());
    const int n_d = static_cast<int>(history.d.size());
    const int n_params = order * (1 + n_u + n_d);
    const int t_train = std::max(order + 1, t_total - (t_total - order) / 5);
    if (t_train - order < n_params)
        throw std::invalid_argument("identify_ridge: history too short for parameter count");

    Matrix xtx(n_params, n_params);
    Vector xty(n_params, 0.0);
    Vector row;
    for (int t = order; t < t_train; ++t) {
        detail::build_arx_row(history, t, order, row);
        for (int a = 0; a < n_params; ++a) {
            xty[a] += row[a] * history.y[t];
            for (int b = 0; b < n_params; ++b) xtx(a, b) += row[a] * row[b];
        }
    }
    for (int a = 0; a < n_params; ++a) xtx(a, a) += lambda;

    Vector theta;
    try {
        theta = cholesky_solve(xtx, xty);
    } catch (const std::runtime_error&) {
        throw std::runtime_error("identify_ridge: normal equations rank-deficient; use lambda > 0");
    }

    // observable companion realisation of the ARX polynomial
    StateSpaceModel m;
    m.dt_minutes = dt_minutes;
    m.A = Matrix(order, order);
    for (int k = 0; k < order; ++k) {
        m.A(k, 0) = theta[k];
        if (k + 1 < order) m.A(k, k + 1) = 1.0;
    }
    int off = order;
    for (int q = 0; q < n_u; ++q, off += order)
        m.B.push_back(Vector(theta.begin() + off, theta.begin() + off + order));
    m.input_names = history.input_names.empty() ? std::vector<std::string>(n_u, "") : history.input_names;
    for (int ex = 0; ex < n_d; ++ex, off += order)
        m.E.push_back(Vector(theta.begin() + off, theta.begin() + off + order));
    m.disturbance_names = history.disturbance_names.empty() ? std::vector<std::string>(n_d, "") : history.disturbance_names;
    m.C = Matrix(1, order);
    m.C(0, 0) = 1.0;
    m.output_names = {"y"};
    for (int k = 0; k < order; ++k) m.state_names.push_back("x" + std::to_string(k));

    double sq = 0.0;
    int n_test = 0;
    for (int t = std::max(order, t_train); t < t_total; ++t) {
        detail::build_arx_row(history, t, order, row);
        double pred = 0.0;
        for (int a = 0; a < n_params; ++a) pred += theta[a] * row[a];
        sq += (pred - history.y[t]) * (pred - history.y[t]);
        ++n_test;
    }
    return {std::move(m), n_test > 0 ? std::sqrt(sq / n_test) : 0.0};
}

/// Reconstruct the companion-form state at the newest sample of the given history
/// tails (each ordered oldest..newest, at least `order` samples of y and order-1 of
/// each input/disturbance are used). Only valid for models in companion form, i.e.
/// models produced by identify_ridge or built the same way.
inline Vector companion_state_from_history(const StateSpaceModel& model, const Vector& y_tail,
                                           const std::vector<Vector>& u_tail,
                                           const std::vector<Vector>& d_tail) {
    const int n = model.order();
    if (static_cast<int>(y_tail.size()) < n)
        throw std::invalid_argument("companion_state_from_history: need at least `order` output samples");
    auto newest = [](const Vector& v, int back) { return v[v.size() - 1 - back]; };
    Vector x(n, 0.0);
    x[0] = newest(y_tail, 0);
    // x[j] carries the not-yet-applied tail of the ARX sum:
    //   x_t[j] = sum_{k=j+1..n} a_k y_{t+j-k} + b_k u_{t+j-k} + e_k d_{t+j-k}
    for (int j = 1; j < n; ++j) {
        double s = 0.0;
        for (int k = j + 1; k <= n; ++k) {
            const int back = k - j;  // samples behind the newest
            s += model.A(k - 1, 0) * newest(y_tail, back);
            for (size_t q = 0; q < model.B.size(); ++q)
                if (static_cast<int>(u_tail[q].size()) >= back) s += model.B[q][k - 1] * newest(u_tail[q], back);
            for (size_t ex = 0; ex < model.E.size(); ++ex)
                if (static_cast<int>(d_tail[ex].size()) >= back) s += model.E[ex][k - 1] * newest(d_tail[ex], back);
        }
        x[j] = s;
    }
    return x;
}

}  // namespace sems
