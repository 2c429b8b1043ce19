#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sems/linalg.hpp"
#include "sems/rng.hpp"

namespace sems {

// ---------------------------------------------------------------------------
// Daily chunking
// ---------------------------------------------------------------------------

/// Training data broken into daily chunks, with one feature vector per day
/// (day-type one-hot plus mean external temperature by default).
struct DailyProfileSet {
    int steps_per_day = 96;
    std::vector<Vector> profiles;
    std::vector<Vector> features;  // aligned 1:1 with profiles once attached
    bool truncated_tail = false;   // a trailing incomplete day was dropped
};

inline DailyProfileSet chunk_daily(const Vector& series, int steps_per_day) {
    if (series.empty()) throw std::invalid_argument("chunk_daily: empty series");
    if (steps_per_day < 1) throw std::invalid_argument("chunk_daily: steps_per_day must be >= 1");
    DailyProfileSet out;
    out.steps_per_day = steps_per_day;
    const size_t days = series.size() / steps_per_day;
    for (size_t d = 0; d < days; ++d)
        out.profiles.emplace_back(series.begin() + d * steps_per_day, series.begin() + (d + 1) * steps_per_day);
    out.truncated_tail = series.size() % steps_per_day != 0;
    return out;
}

enum class DayType { weekday = 0, weekend = 1, holiday = 2 };

/// Day-type one-hot + mean external temperature (+ optional previous-day mean load).
inline Vector day_features(DayType type, double mean_temp,
                           double prev_mean_load = 0.0, bool use_prev_load = false) {
    Vector f(use_prev_load ? 5 : 4, 0.0);
    f[static_cast<int>(type)] = 1.0;
    f[3] = mean_temp;
    if (use_prev_load) f[4] = prev_mean_load;
    return f;
}

// ---------------------------------------------------------------------------
// k-means clustering of daily profiles
// ---------------------------------------------------------------------------

struct ClusterModel {
    int k = 0;
    std::vector<Vector> centroids;
    std::vector<int> assignment;     // per training day
    std::vector<double> inertia_log; // inertia after each Lloyd iteration
};

namespace forecast_detail {

inline double sq_dist(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace forecast_detail

/// Lloyd's algorithm with k-means++ seeding; iterates to an assignment fixpoint
/// (at most 300 iterations). Empty clusters are re-seeded from the farthest point.
inline ClusterModel kmeans_fit(const DailyProfileSet& set, int k, std::uint64_t seed) {
    using forecast_detail::sq_dist;
    const auto& pts = set.profiles;
    const int n = static_cast<int>(pts.size());
    if (k < 1 || k > n) throw std::invalid_argument("kmeans_fit: k must be in [1, profiles]");
    Rng rng(seed);

    ClusterModel model;
    model.k = k;
    model.centroids.push_back(pts[rng.index(n)]);
    Vector d2(n);
    while (static_cast<int>(model.centroids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : model.centroids) best = std::min(best, sq_dist(pts[i], c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            model.centroids.push_back(pts[rng.index(n)]);
            continue;
        }
        double target = rng.uniform() * total;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            target -= d2[i];
            if (target <= 0) { pick = i; break; }
        }
        model.centroids.push_back(pts[pick]);
    }

    model.assignment.assign(n, -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bestd = sq_dist(pts[i], model.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(pts[i], model.centroids[c]);
                if (d < bestd) { bestd = d; best = c; }
            }
            if (model.assignment[i] != best) { model.assignment[i] = best; changed = true; }
        }
        std::vector<int> count(k, 0);
        std::vector<Vector> sum(k, Vector(pts[0].size(), 0.0));
        for (int i = 0; i < n; ++i) {
            ++count[model.assignment[i]];
            for (size_t j = 0; j < pts[i].size(); ++j) sum[model.assignment[i]][j] += pts[i][j];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] == 0) {
                // re-seed from the profile farthest from its centroid
                int far = 0;
                double fard = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist(pts[i], model.centroids[model.assignment[i]]);
                    if (d > fard) { fard = d; far = i; }
                }
                model.centroids[c] = pts[far];
                changed = true;
            } else {
                for (size_t j = 0; j < sum[c].size(); ++j) model.centroids[c][j] = sum[c][j] / count[c];
            }
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += sq_dist(pts[i], model.centroids[model.assignment[i]]);
        model.inertia_log.push_back(inertia);
        if (!changed) break;
    }
    return model;
}

inline double kmeans_inertia(const ClusterModel& m, const DailyProfileSet& set) {
    double s = 0.0;
    for (size_t i = 0; i < set.profiles.size(); ++i)
        s += forecast_detail::sq_dist(set.profiles[i], m.centroids[m.assignment[i]]);
    return s;
}

// ---------------------------------------------------------------------------
// Classifier interface and the nearest-centroid baseline
// ---------------------------------------------------------------------------

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual int predict(const Vector& features) const = 0;
    virtual std::string kind() const = 0;
};

/// Assigns a day to the cluster whose training days have the closest mean feature
/// vector. Deliberately simple; the reference point the forest is judged against.
class NearestCentroidBaseline final : public Classifier {
public:
    NearestCentroidBaseline() = default;
    NearestCentroidBaseline(const std::vector<Vector>& features, const std::vector<int>& labels, int k) {
        if (features.size() != labels.size()) throw std::invalid_argument("NearestCentroidBaseline: size mismatch");
        if (features.empty()) throw std::invalid_argument("NearestCentroidBaseline: no training data");
        means_.assign(k, Vector(features[0].size(), 0.0));
        std::vector<int> count(k, 0);
        for (size_t i = 0; i < features.size(); ++i) {
            ++count[labels[i]];
            for (size_t j = 0; j < features[i].size(); ++j) means_[labels[i]][j] += features[i][j];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] == 0) continue;
            for (auto& v : means_[c]) v /= count[c];
        }
        present_.assign(k, false);
        for (int l : labels) present_[l] = true;
    }

    int predict(const Vector& f) const override {
        if (means_.empty()) throw std::logic_error("NearestCentroidBaseline: untrained");
        int best = -1;
        double bestd = std::numeric_limits<double>::max();
        for (size_t c = 0; c < means_.size(); ++c) {
            if (!present_[c]) continue;
            const double d = forecast_detail::sq_dist(f, means_[c]);
            if (d < bestd) { bestd = d; best = static_cast<int>(c); }
        }
        return best;
    }

    std::string kind() const override { return "nearest_centroid"; }

    const std::vector<Vector>& class_means() const { return means_; }

private:
    std::vector<Vector> means_;
    std::vector<bool> present_;
};

inline int classify_day(const Classifier& clf, const Vector& features) { return clf.predict(features); }

/// The day-ahead forecast is the centroid of the predicted cluster.
inline Vector forecast_day_cluster(const ClusterModel& model, const Classifier& clf, const Vector& features) {
    if (model.k == 0 || model.centroids.empty()) throw std::logic_error("forecast_day_cluster: untrained cluster model");
    const int c = clf.predict(features);
    if (c < 0 || c >= model.k) throw std::logic_error("forecast_day_cluster: classifier returned invalid cluster");
    return model.centroids[c];
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

inline double mae(const Vector& forecast, const Vector& actual) {
    if (forecast.size() != actual.size()) throw std::invalid_argument("mae: length mismatch");
    if (forecast.empty()) throw std::invalid_argument("mae: empty series");
    double s = 0.0;
    for (size_t i = 0; i < forecast.size(); ++i) s += std::abs(forecast[i] - actual[i]);
    return s / forecast.size();
}

}  // namespace sems
