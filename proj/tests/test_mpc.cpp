#include <catch2/catch_amalgamated.hpp>

#include "plan_audit.hpp"
#include "sems/mpc.hpp"
#include "test_fixtures.hpp"
#include "vertex_oracle.hpp"

using namespace sems;
using sems::testing::audit_plan;
using sems::testing::vertex_oracle;

namespace {

/// One boiler feeding one static heat demand; dt = 60 so kW and kWh coincide.
SubsystemSpec boiler_only(int n, double demand_kw, double eta = 0.9) {
    SubsystemSpec s;
    s.id = "mini";
    s.grid.start = parse_iso8601("2018-11-01T00:00:00Z");
    s.grid.dt_minutes = 60;
    s.grid.steps = n;
    SupplyTech boiler;
    boiler.id = "boiler";
    boiler.conversions = {{"gas", "heat", constant_series(eta, n), constant_series(0.0, n), constant_series(200.0, n)}};
    s.supplies = {boiler};
    s.demands = {TimeSeriesDemand{"load", "heat", constant_series(demand_kw, n)}};
    s.limits.alpha["cost"]["gas"] = constant_series(1.0, n);
    s.phi_nrg = 1.0;
    s.phi_pen = 0.0;
    s.phi_slack = 0.0;
    return s;
}

}  // namespace

TEST_CASE("single boiler covers demand at minimum draw", "[mpc]") {
    const auto spec = boiler_only(1, 9.0);
    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    CHECK(plan.v_sup[0][0][0] == Catch::Approx(10.0).margin(1e-7));
    CHECK(plan.objective == Catch::Approx(10.0).margin(1e-7));
    CHECK(plan.psub.at("gas")[0] == Catch::Approx(10.0).margin(1e-7));
    CHECK(audit_plan(spec, plan, {}).ok());

    // the whole LP agrees with the exhaustive oracle
    auto built = build_subproblem(spec);
    auto ref = vertex_oracle(built.lp);
    REQUIRE(ref.status == LpStatus::optimal);
    CHECK(plan.objective == Catch::Approx(ref.objective).margin(1e-6));
}

TEST_CASE("merit order between two supplies", "[mpc]") {
    auto spec = boiler_only(1, 9.0, 1.0);
    spec.supplies[0].conversions[0].tech_max = constant_series(5.0, 1);  // cheap, capped at 5
    SupplyTech second;
    second.id = "backup";
    second.conversions = {{"oil", "heat", constant_series(0.8, 1), constant_series(0.0, 1), constant_series(100.0, 1)}};
    spec.supplies.push_back(second);
    spec.limits.alpha["cost"]["oil"] = constant_series(1.0, 1);
    // double the oil price through a second factor so oil is strictly dearer
    spec.limits.alpha["co2"]["oil"] = constant_series(1.0, 1);

    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    CHECK(plan.v_sup[0][0][0] == Catch::Approx(5.0).margin(1e-7));
    CHECK(plan.v_sup[1][0][0] == Catch::Approx(4.0 / 0.8).margin(1e-7));
    CHECK(audit_plan(spec, plan, {}).ok());

    auto ref = vertex_oracle(build_subproblem(spec).lp);
    REQUIRE(ref.status == LpStatus::optimal);
    CHECK(plan.objective == Catch::Approx(ref.objective).margin(1e-6));
}

TEST_CASE("zero demand with idle store gives the all-zero plan", "[mpc]") {
    auto spec = boiler_only(4, 0.0);
    StorageTech sto;
    sto.id = "tank";
    sto.carrier = "heat";
    sto.soc_init = 0.0;
    sto.soc_min = constant_series(0.0, 4);
    sto.soc_max = constant_series(50.0, 4);
    sto.u_min = sto.v_min = constant_series(0.0, 4);
    sto.u_max = sto.v_max = constant_series(20.0, 4);
    sto.beta = constant_series(0.0, 4);
    spec.supplies[0].store_connected = true;
    spec.stores = {sto};

    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    CHECK(plan.objective == Catch::Approx(0.0).margin(1e-9));
    for (int i = 0; i < 4; ++i) {
        CHECK(plan.v_sup[0][0][i] == Catch::Approx(0.0).margin(1e-9));
        CHECK(plan.v_sto[0][i] == Catch::Approx(0.0).margin(1e-9));
        CHECK(plan.u_sto[0][i] == Catch::Approx(0.0).margin(1e-9));
        CHECK(plan.soc[0][i] == Catch::Approx(0.0).margin(1e-9));
    }
    CHECK(audit_plan(spec, plan, {}).ok());
}

TEST_CASE("price trough charges the store ahead of demand", "[mpc][store]") {
    auto spec = boiler_only(3, 0.0, 1.0);
    spec.demands = {TimeSeriesDemand{"load", "heat", Series{0.0, 0.0, 5.0}}};
    spec.limits.alpha["cost"]["gas"] = Series{1.0, 0.1, 1.0};
    spec.supplies[0].store_connected = true;
    StorageTech sto;
    sto.id = "tank";
    sto.carrier = "heat";
    sto.soc_init = 0.0;
    sto.soc_min = constant_series(0.0, 3);
    sto.soc_max = constant_series(50.0, 3);
    sto.u_min = sto.v_min = constant_series(0.0, 3);
    sto.u_max = sto.v_max = constant_series(20.0, 3);
    sto.beta = constant_series(0.0, 3);
    spec.stores = {sto};

    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    CHECK(plan.v_sup[0][0][1] == Catch::Approx(5.0).margin(1e-7));  // buy in the trough
    CHECK(plan.v_sto[0][1] == Catch::Approx(5.0).margin(1e-7));     // charge
    CHECK(plan.u_sto[0][2] == Catch::Approx(5.0).margin(1e-7));     // discharge into the peak
    CHECK(plan.objective == Catch::Approx(0.5).margin(1e-7));
    CHECK(audit_plan(spec, plan, {}).ok());
}

TEST_CASE("co2-weighted choice prefers the heat pump", "[mpc]") {
    SubsystemSpec spec;
    spec.id = "choice";
    spec.grid.dt_minutes = 60;
    spec.grid.steps = 1;
    SupplyTech hp, boiler;
    hp.id = "heat_pump";
    hp.conversions = {{"grid_elec", "heat", constant_series(3.0, 1), constant_series(0.0, 1), constant_series(50.0, 1)}};
    boiler.id = "boiler";
    boiler.conversions = {{"gas", "heat", constant_series(0.9, 1), constant_series(0.0, 1), constant_series(50.0, 1)}};
    spec.supplies = {hp, boiler};
    spec.demands = {TimeSeriesDemand{"load", "heat", constant_series(9.0, 1)}};
    spec.limits.alpha["co2"]["grid_elec"] = constant_series(0.1, 1);
    spec.limits.alpha["co2"]["gas"] = constant_series(0.184, 1);
    spec.phi_nrg = 1.0;
    spec.phi_pen = 0.0;
    spec.phi_slack = 0.0;

    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    // per kWh of heat: 0.1/3 = 0.033 vs 0.184/0.9 = 0.204
    CHECK(plan.v_sup[0][0][0] == Catch::Approx(3.0).margin(1e-7));
    CHECK(plan.v_sup[1][0][0] == Catch::Approx(0.0).margin(1e-9));
    CHECK(audit_plan(spec, plan, {}).ok());
}

TEST_CASE("state-space band tracking with slack audit", "[mpc][ssm]") {
    auto spec = sems_test::small_heat_subsystem(12);
    MpcInputs inputs;
    inputs.x_init = {{54.0}};
    inputs.disturbances = {Matrix(2, 12)};
    for (int i = 0; i < 12; ++i) {
        inputs.disturbances[0](0, i) = 30.0 + 5.0 * (i % 3);  // building draw kW
        inputs.disturbances[0](1, i) = 8.0;                   // ambient degC
    }
    auto plan = solve_subproblem(spec, inputs);
    REQUIRE(plan.status == PlanStatus::optimal);
    auto audit = audit_plan(spec, plan, inputs);
    INFO("worst " << audit.worst_at << " residual " << audit.max_residual << " obj gap " << audit.objective_gap
                  << " bound " << audit.objective_gap_bound);
    CHECK(audit.ok());
    // away from the end of the horizon the band is worth holding; the final
    // steps may glide out (terminal effect the receding horizon re-solves fix)
    for (int i = 0; i < 6; ++i) {
        CHECK(plan.y[0](0, i) >= 50.0 - 1e-6);
        CHECK(plan.y[0](0, i) <= 65.0 + 1e-6);
    }
}

TEST_CASE("relaxing resource caps never worsens the objective", "[mpc][property]") {
    auto spec = sems_test::small_heat_subsystem(8);
    MpcInputs inputs;
    inputs.x_init = {{55.0}};
    inputs.disturbances = {Matrix(2, 8)};
    for (int i = 0; i < 8; ++i) {
        inputs.disturbances[0](0, i) = 40.0;
        inputs.disturbances[0](1, i) = 5.0;
    }
    spec.limits.p_max["grid_elec"] = constant_series(12.0, 8);
    auto tight = solve_subproblem(spec, inputs);
    REQUIRE(tight.status == PlanStatus::optimal);
    for (double cap : {14.0, 20.0, 40.0, 100.0}) {
        spec.limits.p_max["grid_elec"] = constant_series(cap, 8);
        auto relaxed = solve_subproblem(spec, inputs);
        REQUIRE(relaxed.status == PlanStatus::optimal);
        CHECK(relaxed.objective <= tight.objective + 1e-6);
    }
}

TEST_CASE("rescaled-and-renormalised weights give the same plan", "[mpc][property]") {
    auto spec = sems_test::small_heat_subsystem(6);
    MpcInputs inputs;
    inputs.x_init = {{55.0}};
    inputs.disturbances = {Matrix(2, 6)};
    for (int i = 0; i < 6; ++i) {
        inputs.disturbances[0](0, i) = 35.0;
        inputs.disturbances[0](1, i) = 6.0;
    }
    auto base = solve_subproblem(spec, inputs);
    REQUIRE(base.status == PlanStatus::optimal);

    auto scaled = spec;
    const double lambda = 3.7;
    const double sum = lambda * (spec.phi_nrg + spec.phi_pen + spec.phi_slack);
    scaled.phi_nrg = lambda * spec.phi_nrg / sum;
    scaled.phi_pen = lambda * spec.phi_pen / sum;
    scaled.phi_slack = lambda * spec.phi_slack / sum;
    auto again = solve_subproblem(scaled, inputs);
    REQUIRE(again.status == PlanStatus::optimal);
    for (size_t s = 0; s < base.v_sup.size(); ++s)
        for (size_t c = 0; c < base.v_sup[s].size(); ++c)
            for (int i = 0; i < 6; ++i)
                CHECK(again.v_sup[s][c][i] == Catch::Approx(base.v_sup[s][c][i]).margin(1e-6));
}

TEST_CASE("infeasible caps produce a structured report", "[mpc]") {
    auto spec = boiler_only(4, 50.0);
    spec.limits.p_max["gas"] = constant_series(10.0, 4);  // demand needs 50/0.9 kW of gas
    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::infeasible);
    CHECK(plan.diagnostic.find("step 0") != std::string::npos);
    CHECK(plan.diagnostic.find("heat") != std::string::npos);
}

TEST_CASE("impossible static balance fails fast at build time", "[mpc]") {
    auto spec = boiler_only(4, 300.0);  // 300 kW demand vs 200*0.9 kW capacity
    CHECK_THROWS_WITH(build_subproblem(spec), Catch::Matchers::ContainsSubstring("static balance infeasible"));
}

TEST_CASE("missing disturbance forecast is rejected by name", "[mpc]") {
    auto spec = sems_test::small_heat_subsystem(4);
    CHECK_THROWS_WITH(solve_subproblem(spec, {}), Catch::Matchers::ContainsSubstring("missing forecast channel"));
}

TEST_CASE("apply_first_step slices i=0", "[mpc]") {
    auto spec = boiler_only(3, 0.0, 1.0);
    spec.demands = {TimeSeriesDemand{"load", "heat", Series{7.0, 1.0, 2.0}}};
    auto plan = solve_subproblem(spec);
    REQUIRE(plan.status == PlanStatus::optimal);
    auto cmd = apply_first_step(spec, plan);
    CHECK(cmd.v_sup[0][0] == Catch::Approx(7.0).margin(1e-7));
    CHECK(cmd.u_sup[0].at("heat") == Catch::Approx(7.0).margin(1e-7));

    OptimalPlan bad;
    bad.status = PlanStatus::infeasible;
    CHECK_THROWS_AS(apply_first_step(spec, bad), std::logic_error);
}

TEST_CASE("warm-started subsystem re-solves match fresh solves", "[mpc]") {
    auto spec = sems_test::small_heat_subsystem(12);
    SimplexSolver warm;
    for (int round = 0; round < 6; ++round) {
        MpcInputs inputs;
        inputs.x_init = {{52.0 + round}};
        inputs.soc_init = {10.0 + 2.0 * round};
        inputs.disturbances = {Matrix(2, 12)};
        for (int i = 0; i < 12; ++i) {
            inputs.disturbances[0](0, i) = 25.0 + round + i % 4;
            inputs.disturbances[0](1, i) = 4.0 + round;
        }
        auto fresh = solve_subproblem(spec, inputs);
        auto reused = solve_subproblem(spec, inputs, {}, &warm);
        REQUIRE(fresh.status == PlanStatus::optimal);
        REQUIRE(reused.status == fresh.status);
        CHECK(reused.objective == Catch::Approx(fresh.objective).margin(1e-6 * (1 + std::abs(fresh.objective))));
        CHECK(audit_plan(spec, reused, inputs).ok());
    }
}

TEST_CASE("plan csv export is one labelled row per step", "[mpc]") {
    auto spec = boiler_only(3, 9.0);
    auto plan = solve_subproblem(spec);
    const auto csv = plan_to_csv(spec, plan);
    CHECK(csv.find("v_sup.boiler.gas->heat") != std::string::npos);
    CHECK(csv.find("psub.gas") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 steps
}

TEST_CASE("variable index is bijective", "[mpc]") {
    auto spec = sems_test::small_heat_subsystem(6);
    auto built = build_subproblem(spec, [] {
        MpcInputs in;
        in.x_init = {{55.0}};
        in.disturbances = {Matrix(2, 6)};
        return in;
    }());
    CHECK(static_cast<int>(built.index.by_column.size()) == built.lp.n);
}
