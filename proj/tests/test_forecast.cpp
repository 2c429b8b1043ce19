#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sems/forecast.hpp"
#include "sems/random_forest.hpp"

using namespace sems;

TEST_CASE("chunk_daily splits and truncates", "[forecast]") {
    Vector series(192, 1.0);
    auto set = chunk_daily(series, 96);
    CHECK(set.profiles.size() == 2);
    CHECK_FALSE(set.truncated_tail);

    series.resize(200, 2.0);
    set = chunk_daily(series, 96);
    CHECK(set.profiles.size() == 2);
    CHECK(set.truncated_tail);

    Vector constant(96 * 3, 7.5);
    set = chunk_daily(constant, 96);
    REQUIRE(set.profiles.size() == 3);
    CHECK(set.profiles[0] == set.profiles[2]);

    CHECK_THROWS_AS(chunk_daily({}, 96), std::invalid_argument);
}

TEST_CASE("kmeans with k=1 returns the elementwise mean", "[forecast][kmeans]") {
    DailyProfileSet set;
    set.steps_per_day = 4;
    set.profiles = {{1, 2, 3, 4}, {3, 4, 5, 6}, {5, 6, 7, 8}};
    auto model = kmeans_fit(set, 1, 0);
    REQUIRE(model.centroids.size() == 1);
    const Vector mean{3, 4, 5, 6};
    for (int j = 0; j < 4; ++j) CHECK(model.centroids[0][j] == Catch::Approx(mean[j]).margin(1e-12));
}

TEST_CASE("well separated groups get their own centroids", "[forecast][kmeans]") {
    DailyProfileSet set;
    set.steps_per_day = 3;
    set.profiles = {{0, 0, 0}, {0.1, 0, 0}, {10, 10, 10}, {10, 10, 10.1}};
    auto model = kmeans_fit(set, 2, 1);
    CHECK(model.assignment[0] == model.assignment[1]);
    CHECK(model.assignment[2] == model.assignment[3]);
    CHECK(model.assignment[0] != model.assignment[2]);
}

namespace {

double brute_force_two_partition_inertia(const std::vector<Vector>& pts) {
    const int n = static_cast<int>(pts.size());
    double best = std::numeric_limits<double>::max();
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        Vector c0(pts[0].size(), 0.0), c1(pts[0].size(), 0.0);
        int n0 = 0, n1 = 0;
        for (int i = 0; i < n; ++i) {
            auto& c = (mask >> i & 1) ? c1 : c0;
            ((mask >> i & 1) ? n1 : n0)++;
            for (size_t j = 0; j < pts[i].size(); ++j) c[j] += pts[i][j];
        }
        for (auto& v : c0) v /= n0;
        for (auto& v : c1) v /= n1;
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto& c = (mask >> i & 1) ? c1 : c0;
            for (size_t j = 0; j < pts[i].size(); ++j)
                inertia += (pts[i][j] - c[j]) * (pts[i][j] - c[j]);
        }
        best = std::min(best, inertia);
    }
    return best;
}

}  // namespace

TEST_CASE("six profiles, k=2: inertia equals the brute-force minimum", "[forecast][kmeans]") {
    DailyProfileSet set;
    set.steps_per_day = 2;
    set.profiles = {{0.0, 0.2}, {0.3, 0.0}, {0.1, 0.1}, {5.0, 5.2}, {5.3, 5.0}, {5.1, 5.1}};
    auto model = kmeans_fit(set, 2, 42);
    const double got = kmeans_inertia(model, set);
    const double want = brute_force_two_partition_inertia(set.profiles);
    CHECK(got == Catch::Approx(want).margin(1e-9));
}

TEST_CASE("kmeans properties: monotone inertia and mean centroids", "[forecast][kmeans]") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    DailyProfileSet set;
    set.steps_per_day = 8;
    for (int d = 0; d < 30; ++d) {
        Vector p(8);
        for (auto& v : p) v = u(rng);
        set.profiles.push_back(p);
    }
    auto model = kmeans_fit(set, 4, 9);
    for (size_t i = 1; i < model.inertia_log.size(); ++i)
        CHECK(model.inertia_log[i] <= model.inertia_log[i - 1] + 1e-9);
    // each centroid is the mean of its assigned members
    for (int c = 0; c < model.k; ++c) {
        Vector mean(8, 0.0);
        int count = 0;
        for (size_t i = 0; i < set.profiles.size(); ++i) {
            if (model.assignment[i] != c) continue;
            ++count;
            for (int j = 0; j < 8; ++j) mean[j] += set.profiles[i][j];
        }
        REQUIRE(count > 0);
        for (int j = 0; j < 8; ++j) CHECK(model.centroids[c][j] == Catch::Approx(mean[j] / count).margin(1e-9));
    }
}

TEST_CASE("classification pipeline recalls separable training days", "[forecast][pipeline]") {
    // two demand regimes driven by temperature: cold days high, warm days low
    DailyProfileSet set;
    set.steps_per_day = 4;
    std::vector<Vector> feats;
    for (int d = 0; d < 20; ++d) {
        const bool cold = d % 2 == 0;
        const double load = cold ? 100.0 : 20.0;
        set.profiles.push_back(Vector(4, load + 0.1 * d));
        feats.push_back(day_features(DayType::weekday, cold ? 2.0 : 16.0));
    }
    set.features = feats;
    auto model = kmeans_fit(set, 2, 3);
    RfConfig cfg;
    cfg.n_trees = 20;
    cfg.seed = 7;
    auto rf = rf_fit(feats, model.assignment, model.k, cfg);
    for (int d = 0; d < 20; ++d) CHECK(classify_day(rf, feats[d]) == model.assignment[d]);
    // the pipeline forecast is always exactly one of the centroids
    for (int d = 0; d < 20; ++d) {
        const auto f = forecast_day_cluster(model, rf, feats[d]);
        CHECK((f == model.centroids[0] || f == model.centroids[1]));
    }
}

TEST_CASE("nearest-centroid baseline picks the matching class mean", "[forecast][pipeline]") {
    std::vector<Vector> feats = {{0.0, 1.0}, {0.2, 1.0}, {4.0, 2.0}, {4.2, 2.0}};
    std::vector<int> labels = {0, 0, 1, 1};
    NearestCentroidBaseline base(feats, labels, 2);
    CHECK(base.predict(base.class_means()[0]) == 0);
    CHECK(base.predict(base.class_means()[1]) == 1);
}

TEST_CASE("k=1 forecasts the single centroid regardless of features", "[forecast][pipeline]") {
    DailyProfileSet set;
    set.steps_per_day = 3;
    set.profiles = {{1, 2, 3}, {2, 3, 4}};
    auto model = kmeans_fit(set, 1, 0);
    NearestCentroidBaseline base({{0.0}, {9.0}}, {0, 0}, 1);
    CHECK(forecast_day_cluster(model, base, {123.0}) == model.centroids[0]);
    CHECK(forecast_day_cluster(model, base, {-55.0}) == model.centroids[0]);
}

TEST_CASE("untrained cluster model is rejected", "[forecast][pipeline]") {
    ClusterModel empty;
    NearestCentroidBaseline base({{0.0}}, {0}, 1);
    CHECK_THROWS_AS(forecast_day_cluster(empty, base, {0.0}), std::logic_error);
}

TEST_CASE("random forest on a separable toy set", "[forecast][rf]") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vector> feats;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
        const int cls = i % 2;
        feats.push_back({u(rng) + (cls ? 2.0 : 0.0), u(rng)});
        labels.push_back(cls);
    }
    RfConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = 5;
    auto rf = rf_fit(feats, labels, 2, cfg);
    CHECK(rf.oob_accuracy() >= 0.95);

    // prediction is invariant under tree order
    auto shuffled = rf;
    std::reverse(shuffled.trees().begin(), shuffled.trees().end());
    for (int i = 0; i < 120; ++i) CHECK(shuffled.predict(feats[i]) == rf.predict(feats[i]));
}

TEST_CASE("a single depth-1 tree splits a binary feature exactly", "[forecast][rf]") {
    std::vector<Vector> feats = {{0.0}, {0.0}, {1.0}, {1.0}};
    std::vector<int> labels = {0, 0, 1, 1};
    RfConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 1;
    cfg.feature_fraction = 1.0;
    cfg.bootstrap = false;
    cfg.seed = 2;
    auto rf = rf_fit(feats, labels, 2, cfg);
    CHECK(rf.predict({0.0}) == 0);
    CHECK(rf.predict({1.0}) == 1);
}

TEST_CASE("constant labels give a constant classifier", "[forecast][rf]") {
    std::vector<Vector> feats = {{0.0}, {1.0}, {2.0}};
    std::vector<int> labels = {1, 1, 1};
    auto rf = rf_fit(feats, labels, 3);
    CHECK(rf.constant());
    CHECK(rf.predict({17.0}) == 1);
}

TEST_CASE("mae matches a naive loop", "[forecast][metrics]") {
    CHECK(mae({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(mae({1, 3}, {2, 2}) == Catch::Approx(1.0));
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Vector f(31), a(31);
    for (size_t i = 0; i < f.size(); ++i) {
        f[i] = u(rng);
        a[i] = u(rng);
    }
    double naive = 0.0;
    for (size_t i = 0; i < f.size(); ++i) naive += std::abs(f[i] - a[i]);
    naive /= f.size();
    CHECK(mae(f, a) == Catch::Approx(naive).margin(1e-15));
    CHECK_THROWS_AS(mae({}, {}), std::invalid_argument);
}
