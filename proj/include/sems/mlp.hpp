#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sems/linalg.hpp"
#include "sems/rng.hpp"

namespace sems {

struct MlpConfig {
    std::vector<int> hidden{8};
    double learning_rate = 0.01;
    int epochs = 200;
    int batch = 16;
    std::uint64_t seed = 0;
    bool standardize = true;  // z-score inputs/outputs with training statistics
};

/// Multi-layer perceptron regressor, tanh hidden units, linear output, trained
/// by minibatch stochastic gradient descent on half mean squared error.
class MlpRegressor {
public:
    MlpRegressor() = default;
    MlpRegressor(int n_in, const std::vector<int>& hidden, int n_out, Rng& rng) {
        std::vector<int> sizes{n_in};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(n_out);
        for (size_t l = 0; l + 1 < sizes.size(); ++l) {
            Matrix w(sizes[l + 1], sizes[l]);
            const double s = 1.0 / std::sqrt(std::max(1, sizes[l]));
            for (auto& v : w.a) v = rng.uniform(-s, s);
            w_.push_back(std::move(w));
            b_.push_back(Vector(sizes[l + 1], 0.0));
        }
        x_mean_.assign(n_in, 0.0);
        x_scale_.assign(n_in, 1.0);
        y_mean_.assign(n_out, 0.0);
        y_scale_.assign(n_out, 1.0);
    }

    int n_inputs() const { return w_.empty() ? 0 : w_.front().cols; }
    int n_outputs() const { return w_.empty() ? 0 : w_.back().rows; }
    int n_layers() const { return static_cast<int>(w_.size()); }

    std::vector<Matrix>& weights() { return w_; }
    std::vector<Vector>& biases() { return b_; }
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }

    Vector predict_one(const Vector& x_raw) const {
        Vector a = scale_x(x_raw);
        for (size_t l = 0; l < w_.size(); ++l) {
            a = affine(l, a);
            if (l + 1 < w_.size())
                for (auto& v : a) v = std::tanh(v);
        }
        for (int o = 0; o < n_outputs(); ++o) a[o] = a[o] * y_scale_[o] + y_mean_[o];
        return a;
    }

    /// half-MSE over a dataset, in the scaled space the gradients live in
    double loss(const std::vector<Vector>& x, const std::vector<Vector>& y) const {
        double s = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            Vector yhat = predict_one(x[i]);
            for (int o = 0; o < n_outputs(); ++o) {
                const double d = (yhat[o] - y[i][o]) / y_scale_[o];
                s += 0.5 * d * d;
            }
        }
        return s / x.size();
    }

    /// Backpropagated gradient of loss() with respect to every weight then every
    /// bias, layer by layer, flattened in storage order.
    Vector gradient(const std::vector<Vector>& x, const std::vector<Vector>& y) const {
        std::vector<Matrix> gw;
        std::vector<Vector> gb;
        for (size_t l = 0; l < w_.size(); ++l) {
            gw.emplace_back(w_[l].rows, w_[l].cols);
            gb.emplace_back(Vector(b_[l].size(), 0.0));
        }
        accumulate_gradient(x, y, gw, gb);
        Vector flat;
        for (const auto& g : gw) flat.insert(flat.end(), g.a.begin(), g.a.end());
        for (const auto& g : gb) flat.insert(flat.end(), g.begin(), g.end());
        return flat;
    }

    void set_scaling(Vector xm, Vector xs, Vector ym, Vector ys) {
        x_mean_ = std::move(xm);
        x_scale_ = std::move(xs);
        y_mean_ = std::move(ym);
        y_scale_ = std::move(ys);
    }

    friend MlpRegressor mlp_fit(const std::vector<Vector>&, const std::vector<Vector>&, const MlpConfig&);

private:
    std::vector<Matrix> w_;
    std::vector<Vector> b_;
    Vector x_mean_, x_scale_, y_mean_, y_scale_;
    std::vector<double> epoch_losses_;

    Vector scale_x(const Vector& x) const {
        if (static_cast<int>(x.size()) != n_inputs()) throw std::invalid_argument("MlpRegressor: input size mismatch");
        Vector out(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - x_mean_[i]) / x_scale_[i];
        return out;
    }

    Vector affine(size_t l, const Vector& a) const {
        Vector out = b_[l];
        for (int r = 0; r < w_[l].rows; ++r)
            for (int c = 0; c < w_[l].cols; ++c) out[r] += w_[l](r, c) * a[c];
        return out;
    }

    void accumulate_gradient(const std::vector<Vector>& x, const std::vector<Vector>& y,
                             std::vector<Matrix>& gw, std::vector<Vector>& gb) const {
        const double inv_n = 1.0 / x.size();
        for (size_t i = 0; i < x.size(); ++i) {
            // forward pass keeping activations
            std::vector<Vector> acts{scale_x(x[i])};
            for (size_t l = 0; l < w_.size(); ++l) {
                Vector z = affine(l, acts.back());
                if (l + 1 < w_.size())
                    for (auto& v : z) v = std::tanh(v);
                acts.push_back(std::move(z));
            }
            Vector delta(n_outputs());
            for (int o = 0; o < n_outputs(); ++o)
                delta[o] = (acts.back()[o] - (y[i][o] - y_mean_[o]) / y_scale_[o]) * inv_n;
            for (int l = static_cast<int>(w_.size()) - 1; l >= 0; --l) {
                for (int r = 0; r < w_[l].rows; ++r) {
                    gb[l][r] += delta[r];
                    for (int c = 0; c < w_[l].cols; ++c) gw[l](r, c) += delta[r] * acts[l][c];
                }
                if (l == 0) break;
                Vector prev(w_[l].cols, 0.0);
                for (int c = 0; c < w_[l].cols; ++c) {
                    double s = 0.0;
                    for (int r = 0; r < w_[l].rows; ++r) s += w_[l](r, c) * delta[r];
                    prev[c] = s * (1.0 - acts[l][c] * acts[l][c]);  // tanh'
                }
                delta = std::move(prev);
            }
        }
    }
};

inline MlpRegressor mlp_fit(const std::vector<Vector>& x, const std::vector<Vector>& y, const MlpConfig& cfg) {
    if (x.empty() || x.size() != y.size()) throw std::invalid_argument("mlp_fit: bad training data");
    if (cfg.epochs < 1) throw std::invalid_argument("mlp_fit: epochs must be >= 1");
    const int n_in = static_cast<int>(x[0].size());
    const int n_out = static_cast<int>(y[0].size());
    Rng rng(cfg.seed);
    MlpRegressor model(n_in, cfg.hidden, n_out, rng);

    if (cfg.standardize) {
        Vector xm(n_in, 0.0), xs(n_in, 0.0), ym(n_out, 0.0), ys(n_out, 0.0);
        for (const auto& xi : x)
            for (int j = 0; j < n_in; ++j) xm[j] += xi[j];
        for (const auto& yi : y)
            for (int j = 0; j < n_out; ++j) ym[j] += yi[j];
        for (auto& v : xm) v /= x.size();
        for (auto& v : ym) v /= y.size();
        for (const auto& xi : x)
            for (int j = 0; j < n_in; ++j) xs[j] += (xi[j] - xm[j]) * (xi[j] - xm[j]);
        for (const auto& yi : y)
            for (int j = 0; j < n_out; ++j) ys[j] += (yi[j] - ym[j]) * (yi[j] - ym[j]);
        for (auto& v : xs) v = std::max(1e-9, std::sqrt(v / x.size()));
        for (auto& v : ys) v = std::max(1e-9, std::sqrt(v / y.size()));
        model.set_scaling(std::move(xm), std::move(xs), std::move(ym), std::move(ys));
    }

    const int n = static_cast<int>(x.size());
    const int batch = std::max(1, std::min(cfg.batch, n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<Matrix> gw;
    std::vector<Vector> gb;
    for (int l = 0; l < model.n_layers(); ++l) {
        gw.emplace_back(model.weights()[l].rows, model.weights()[l].cols);
        gb.emplace_back(Vector(model.biases()[l].size(), 0.0));
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
        for (int at = 0; at < n; at += batch) {
            std::vector<Vector> bx, by;
            for (int i = at; i < std::min(n, at + batch); ++i) {
                bx.push_back(x[order[i]]);
                by.push_back(y[order[i]]);
            }
            for (auto& g : gw) std::fill(g.a.begin(), g.a.end(), 0.0);
            for (auto& g : gb) std::fill(g.begin(), g.end(), 0.0);
            model.accumulate_gradient(bx, by, gw, gb);
            for (int l = 0; l < model.n_layers(); ++l) {
                for (size_t k = 0; k < gw[l].a.size(); ++k) model.weights()[l].a[k] -= cfg.learning_rate * gw[l].a[k];
                for (size_t k = 0; k < gb[l].size(); ++k) model.biases()[l][k] -= cfg.learning_rate * gb[l][k];
            }
        }
        const double ep_loss = model.loss(x, y);
        if (!std::isfinite(ep_loss))
            throw std::runtime_error("mlp_fit: loss diverged (non-finite) at epoch " + std::to_string(epoch) +
                                     "; reduce the learning rate");
        model.epoch_losses_.push_back(ep_loss);
    }
    return model;
}

inline std::vector<Vector> mlp_predict(const MlpRegressor& model, const std::vector<Vector>& x) {
    std::vector<Vector> out;
    out.reserve(x.size());
    for (const auto& xi : x) out.push_back(model.predict_one(xi));
    return out;
}

inline Vector mlp_gradient(const MlpRegressor& model, const std::vector<Vector>& x, const std::vector<Vector>& y) {
    return model.gradient(x, y);
}

}  // namespace sems
