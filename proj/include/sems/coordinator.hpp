#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "sems/core.hpp"
#include "sems/mpc.hpp"

namespace sems {

constexpr double kCoordTol = 1e-6;

enum class CoordStatus : char { clean, resolved, best_effort };

inline const char* to_string(CoordStatus s) {
    switch (s) {
        case CoordStatus::clean: return "clean";
        case CoordStatus::resolved: return "resolved";
        default: return "best_effort";
    }
}

struct CoordinationResult {
    std::vector<OptimalPlan> plans;
    std::map<std::string, Series> ptot;
    std::map<std::string, Series> pex;      // residual violation at exit
    int rounds = 0;                          // subsystems re-solved
    CoordStatus status = CoordStatus::clean;
    std::vector<bool> kept_previous;         // tightened re-solve was infeasible; old plan kept

    struct RoundRecord {
        int round;
        std::string subsystem;
        std::string resource;
        int step;
        double pex_before;
        double pmax_new;
        double pex_after;
    };
    std::vector<RoundRecord> trace;
};

/// Eq-style totals: ptot sums every subsystem's resource draw; the excess is
/// max(0, ptot - p_lim) per (resource, step). Resources without a district
/// limit carry no excess.
inline std::pair<std::map<std::string, Series>, std::map<std::string, Series>> compute_totals(
    const std::vector<OptimalPlan>& plans, const std::map<std::string, Series>& p_lim, int n_steps) {
    std::map<std::string, Series> ptot, pex;
    for (const auto& plan : plans)
        for (const auto& [p, series] : plan.psub) {
            if (static_cast<int>(series.size()) != n_steps)
                throw std::invalid_argument("compute_totals: plans disagree on the horizon length");
            auto& t = ptot[p];
            if (t.empty()) t.assign(n_steps, 0.0);
            for (int i = 0; i < n_steps; ++i) t[i] += series[i];
        }
    for (const auto& [p, lim] : p_lim) {
        auto& e = pex[p];
        e.assign(n_steps, 0.0);
        auto it = ptot.find(p);
        if (it == ptot.end()) continue;
        for (int i = 0; i < n_steps; ++i) e[i] = std::max(0.0, it->second[i] - lim[i]);
    }
    return {std::move(ptot), std::move(pex)};
}

inline double total_excess(const std::map<std::string, Series>& pex) {
    double s = 0.0;
    for (const auto& [p, series] : pex)
        for (double v : series) s += v;
    return s;
}

/// Sequential cap tightening over the priority order: while any excess remains
/// and subsystems are left, clamp subsystem l's per-step Pmax to
/// max(Pmin, Psub - Pex) wherever the excess is positive, re-solve l and
/// recompute the totals. At most one re-solve per subsystem. A tightened
/// subproblem that turns infeasible keeps its previous plan and the round moves
/// on (recorded in the result).
inline CoordinationResult coordinate(const DistrictSpec& district, const std::vector<MpcInputs>& inputs,
                                     const MpcOptions& opt = {}, std::vector<SimplexSolver>* warm = nullptr) {
    const int n_sub = static_cast<int>(district.subsystems.size());
    if (static_cast<int>(inputs.size()) != n_sub)
        throw std::invalid_argument("coordinate: one MpcInputs per subsystem required");
    if (warm && static_cast<int>(warm->size()) != n_sub)
        throw std::invalid_argument("coordinate: one warm solver per subsystem required");
    const int n = district.subsystems.front().grid.steps;

    CoordinationResult res;
    res.kept_previous.assign(n_sub, false);
    for (int l = 0; l < n_sub; ++l) {
        auto plan = solve_subproblem(district.subsystems[l], inputs[l], opt, warm ? &(*warm)[l] : nullptr);
        if (plan.status != PlanStatus::optimal)
            throw std::runtime_error("coordinate: subsystem '" + district.subsystems[l].id +
                                     "' has no feasible base plan: " + plan.diagnostic);
        res.plans.push_back(std::move(plan));
    }
    std::tie(res.ptot, res.pex) = compute_totals(res.plans, district.p_lim, n);
    if (total_excess(res.pex) <= kCoordTol) {
        res.status = CoordStatus::clean;
        return res;
    }

    for (int l = 0; l < n_sub && total_excess(res.pex) > kCoordTol; ++l) {
        SubsystemSpec tightened = district.subsystems[l];
        bool touched = false;
        for (const auto& [p, excess] : res.pex) {
            auto psub_it = res.plans[l].psub.find(p);
            if (psub_it == res.plans[l].psub.end()) continue;
            auto& pmax = tightened.limits.p_max[p];
            if (pmax.empty()) pmax = constant_series(kLpInfinity, n);
            const Series* pmin = nullptr;
            auto pmin_it = tightened.limits.p_min.find(p);
            if (pmin_it != tightened.limits.p_min.end()) pmin = &pmin_it->second;
            for (int i = 0; i < n; ++i) {
                if (excess[i] <= kCoordTol) continue;
                const double floor = pmin ? (*pmin)[i] : 0.0;
                const double bar = std::max(floor, psub_it->second[i] - excess[i]);
                if (bar < pmax[i]) {
                    res.trace.push_back({res.rounds + 1, tightened.id, p, i, excess[i], bar, 0.0});
                    pmax[i] = bar;
                    touched = true;
                }
            }
        }
        if (!touched) continue;
        ++res.rounds;
        auto plan = solve_subproblem(tightened, inputs[l], opt, warm ? &(*warm)[l] : nullptr);
        if (plan.status == PlanStatus::optimal) {
            res.plans[l] = std::move(plan);
        } else {
            res.kept_previous[l] = true;  // Pmin floor respected; previous plan stands
        }
        std::tie(res.ptot, res.pex) = compute_totals(res.plans, district.p_lim, n);
        for (auto& rec : res.trace)
            if (rec.round == res.rounds) {
                auto it = res.pex.find(rec.resource);
                rec.pex_after = it != res.pex.end() ? it->second[rec.step] : 0.0;
            }
    }

    res.status = total_excess(res.pex) <= kCoordTol ? CoordStatus::resolved : CoordStatus::best_effort;
    return res;
}

/// Coordination trace: one CSV record per tightened (round, resource, step).
inline std::string coordination_trace_csv(const CoordinationResult& res) {
    std::string out = "round,subsystem,resource,step,pex_before,pmax_new,pex_after\n";
    char buf[160];
    for (const auto& r : res.trace) {
        std::snprintf(buf, sizeof buf, "%d,%s,%s,%d,%.6f,%.6f,%.6f\n", r.round, r.subsystem.c_str(),
                      r.resource.c_str(), r.step, r.pex_before, r.pmax_new, r.pex_after);
        out += buf;
    }
    return out;
}

}  // namespace sems
