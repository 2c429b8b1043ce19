#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sems/ssm.hpp"

using namespace sems;

namespace {

StateSpaceModel scalar_model(double a, double b, double e = 0.0) {
    StateSpaceModel m;
    m.A = Matrix(1, 1);
    m.A(0, 0) = a;
    m.B = {Vector{b}};
    m.input_names = {"heat"};
    if (e != 0.0) {
        m.E = {Vector{e}};
        m.disturbance_names = {"d"};
    }
    m.C = Matrix(1, 1);
    m.C(0, 0) = 1.0;
    m.state_names = {"x0"};
    m.output_names = {"y"};
    return m;
}

}  // namespace

TEST_CASE("identity dynamics hold the state", "[ssm]") {
    StateSpaceModel m;
    m.A = Matrix::identity(3);
    m.C = Matrix(1, 3);
    m.C(0, 0) = 1.0;
    m.state_names = {"a", "b", "c"};
    m.output_names = {"y"};
    Vector x{1.0, -2.0, 0.5};
    auto [xn, y] = simulate_step(m, x, {}, {});
    CHECK(xn == x);
    CHECK(y[0] == Catch::Approx(1.0));
}

TEST_CASE("scalar recursion by hand", "[ssm]") {
    auto m = scalar_model(0.5, 1.0);
    auto [x1, y0] = simulate_step(m, {0.0}, {2.0}, {});
    CHECK(x1[0] == Catch::Approx(2.0));
    CHECK(y0[0] == Catch::Approx(0.0));
    auto [x2, y1] = simulate_step(m, x1, {2.0}, {});
    CHECK(x2[0] == Catch::Approx(3.0));
    CHECK(y1[0] == Catch::Approx(2.0));
}

TEST_CASE("free decay matches the closed form", "[ssm]") {
    auto m = scalar_model(0.9, 0.0);
    Vector x{1.0};
    for (int k = 1; k <= 40; ++k) {
        auto [xn, y] = simulate_step(m, x, {0.0}, {});
        x = xn;
        CHECK(std::abs(x[0] - std::pow(0.9, k)) <= 1e-12);
    }
}

TEST_CASE("simulate_horizon equals repeated steps", "[ssm]") {
    auto m = scalar_model(0.7, 0.4, 0.2);
    const int n = 3;
    Matrix u(1, n), d(1, n);
    u(0, 0) = 1.0; u(0, 1) = -0.5; u(0, 2) = 2.0;
    d(0, 0) = 0.3; d(0, 1) = 0.0; d(0, 2) = -1.0;
    auto [xs, ys] = simulate_horizon(m, {0.25}, u, d);
    REQUIRE(ys.cols == n);
    Vector x{0.25};
    for (int i = 0; i < n; ++i) {
        CHECK(xs(0, i) == Catch::Approx(x[0]).margin(1e-15));
        auto [xn, y] = simulate_step(m, x, {u(0, i)}, {d(0, i)});
        CHECK(ys(0, i) == Catch::Approx(y[0]).margin(1e-15));
        x = xn;
    }
    CHECK(xs(0, n) == Catch::Approx(x[0]).margin(1e-15));
}

TEST_CASE("superposition of inputs", "[ssm]") {
    auto m = scalar_model(0.85, 0.6, 0.3);
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int n = 24;
    Matrix u1(1, n), u2(1, n), u12(1, n), d(1, n), zero(1, n);
    for (int i = 0; i < n; ++i) {
        u1(0, i) = u(rng);
        u2(0, i) = u(rng);
        u12(0, i) = u1(0, i) + u2(0, i);
        d(0, i) = u(rng);
    }
    auto [xa, ya] = simulate_horizon(m, {1.5}, u12, d);
    auto [xb, yb] = simulate_horizon(m, {1.5}, u1, d);
    auto [xc, yc] = simulate_horizon(m, {0.0}, u2, zero);
    for (int i = 0; i <= n; ++i) CHECK(std::abs(xa(0, i) - xb(0, i) - xc(0, i)) <= 1e-10);
    for (int i = 0; i < n; ++i) CHECK(std::abs(ya(0, i) - yb(0, i) - yc(0, i)) <= 1e-10);
}

TEST_CASE("ridge identification recovers a scalar system", "[ssm][ident]") {
    const double a = 0.8, b = 0.5;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    IoHistory h;
    h.input_names = {"u"};
    h.u.resize(1);
    double y = 0.0;
    for (int t = 0; t < 400; ++t) {
        const double ut = ud(rng);
        h.y.push_back(y);
        h.u[0].push_back(ut);
        y = a * y + b * ut;
    }
    auto res = identify_ridge(h, 1, 1e-8);
    CHECK(std::abs(res.model.A(0, 0) - a) <= 1e-6);
    CHECK(std::abs(res.model.B[0][0] - b) <= 1e-6);
    CHECK(res.holdout_rmse <= 1e-6);
}

TEST_CASE("identification consistency for a 2-state system", "[ssm][ident]") {
    // simulate a known order-2 ARX process, identify, check held-out RMSE
    const double a1 = 1.5, a2 = -0.56, b1 = 0.4, b2 = 0.1;  // stable (poles 0.7, 0.8)
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    IoHistory h;
    h.input_names = {"u"};
    h.u.resize(1);
    double y1 = 0.0, y2 = 0.0, u1 = 0.0, u2 = 0.0;
    for (int t = 0; t < 600; ++t) {
        const double y = a1 * y1 + a2 * y2 + b1 * u1 + b2 * u2;
        const double ut = ud(rng);
        h.y.push_back(y);
        h.u[0].push_back(ut);
        y2 = y1; y1 = y;
        u2 = u1; u1 = ut;
    }
    auto res = identify_ridge(h, 2, 1e-10);
    CHECK(res.holdout_rmse <= 1e-6);
    CHECK(std::abs(res.model.A(0, 0) - a1) <= 1e-5);
    CHECK(std::abs(res.model.A(1, 0) - a2) <= 1e-5);
}

TEST_CASE("large lambda shrinks parameters to zero", "[ssm][ident]") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    IoHistory h;
    h.input_names = {"u"};
    h.u.resize(1);
    for (int t = 0; t < 200; ++t) {
        h.y.push_back(ud(rng));
        h.u[0].push_back(ud(rng));
    }
    auto res = identify_ridge(h, 1, 1e9);
    CHECK(std::abs(res.model.A(0, 0)) <= 1e-6);
    CHECK(std::abs(res.model.B[0][0]) <= 1e-6);
}

TEST_CASE("zero history with ridge gives zero parameters", "[ssm][ident]") {
    IoHistory h;
    h.input_names = {"u"};
    h.u = {Vector(100, 0.0)};
    h.y = Vector(100, 0.0);
    auto res = identify_ridge(h, 1, 1.0);
    CHECK(res.model.A(0, 0) == 0.0);
    CHECK(res.model.B[0][0] == 0.0);
}

TEST_CASE("rank-deficient regression without ridge is rejected", "[ssm][ident]") {
    IoHistory h;
    h.input_names = {"u"};
    h.u = {Vector(100, 0.0)};
    h.y = Vector(100, 0.0);
    CHECK_THROWS_WITH(identify_ridge(h, 1, 0.0), Catch::Matchers::ContainsSubstring("lambda > 0"));
}

TEST_CASE("dimension mismatches are rejected", "[ssm]") {
    auto m = scalar_model(0.5, 1.0);
    CHECK_THROWS_AS(simulate_step(m, {0.0, 1.0}, {1.0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(simulate_step(m, {0.0}, {}, {}), std::invalid_argument);
}

TEST_CASE("companion state reconstruction matches simulation", "[ssm][ident]") {
    // identify an order-2 model, then rebuild its state from output/input history
    const double a1 = 1.2, a2 = -0.35, b1 = 0.5, b2 = 0.2;
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    IoHistory h;
    h.input_names = {"u"};
    h.u.resize(1);
    double y1 = 0.0, y2 = 0.0, u1 = 0.0, u2 = 0.0;
    for (int t = 0; t < 500; ++t) {
        const double y = a1 * y1 + a2 * y2 + b1 * u1 + b2 * u2;
        h.y.push_back(y);
        const double ut = ud(rng);
        h.u[0].push_back(ut);
        y2 = y1; y1 = y;
        u2 = u1; u1 = ut;
    }
    auto model = identify_ridge(h, 2, 1e-10).model;

    // drive the companion model and compare against reconstruction from history
    const int n = 30;
    Matrix u(1, n), d(0, n);
    std::vector<double> ys, us;
    for (int i = 0; i < n; ++i) u(0, i) = ud(rng);
    auto [xs, yhat] = simulate_horizon(model, {0.0, 0.0}, u, d);
    for (int i = 0; i < n; ++i) {
        ys.push_back(yhat(0, i));
        us.push_back(u(0, i));
        if (i >= 2) {
            Vector x = companion_state_from_history(model, ys, {us}, {});
            CHECK(std::abs(x[0] - xs(0, i)) <= 1e-9);
            CHECK(std::abs(x[1] - xs(1, i)) <= 1e-9);
        }
    }
}
