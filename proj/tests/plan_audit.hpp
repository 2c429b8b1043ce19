#pragma once

// Independent audit of an optimal plan against the subsystem constraint set and
// objective, recomputed straight from the spec and the plan trajectories (no
// shared code with the LP builder beyond the domain types).

#include <cmath>
#include <set>
#include <string>
#include <variant>

#include "sems/core.hpp"
#include "sems/mpc.hpp"

namespace sems::testing {

struct AuditResult {
    double max_residual = 0.0;       // worst constraint violation, kW/kWh scale
    double objective_gap = 0.0;      // |recomposed J - plan.objective|
    double objective_gap_bound = 0.0;
    std::string worst_at;

    bool ok(double tol = 1e-6) const {
        return max_residual <= tol && objective_gap <= objective_gap_bound + tol;
    }
};

inline AuditResult audit_plan(const SubsystemSpec& spec, const OptimalPlan& plan, const MpcInputs& inputs,
                              const MpcOptions& opt = {}) {
    AuditResult res;
    const int n = spec.grid.steps;
    const double dt_h = spec.grid.dt_hours();
    auto worst = [&](double violation, const std::string& where) {
        if (violation > res.max_residual) {
            res.max_residual = violation;
            res.worst_at = where;
        }
    };

    // supply conversion identity and bounds
    for (size_t s = 0; s < spec.supplies.size(); ++s) {
        std::map<std::string, Series> u_re;
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            const auto& conv = spec.supplies[s].conversions[c];
            auto& u = u_re[conv.carrier];
            if (u.empty()) u.assign(n, 0.0);
            for (int i = 0; i < n; ++i) {
                const double v = plan.v_sup[s][c][i];
                u[i] += conv.eta[i] * v;
                worst(conv.tech_min[i] - v, "tech_min s=" + std::to_string(s));
                worst(v - conv.tech_max[i], "tech_max s=" + std::to_string(s));
            }
        }
        for (const auto& [q, series] : u_re)
            for (int i = 0; i < n; ++i)
                worst(std::abs(series[i] - plan.u_sup[s].at(q)[i]), "u_sup identity s=" + std::to_string(s));
    }

    // per-resource windows and the psub identity
    std::map<std::string, Series> draw;
    for (size_t s = 0; s < spec.supplies.size(); ++s)
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            auto& d = draw[spec.supplies[s].conversions[c].resource];
            if (d.empty()) d.assign(n, 0.0);
            for (int i = 0; i < n; ++i) d[i] += plan.v_sup[s][c][i];
        }
    for (const auto& [p, series] : draw) {
        for (int i = 0; i < n; ++i) {
            worst(std::abs(series[i] - plan.psub.at(p)[i]), "psub identity " + p);
            auto hi = spec.limits.p_max.find(p);
            if (hi != spec.limits.p_max.end()) worst(series[i] - hi->second[i], "p_max " + p + " i=" + std::to_string(i));
            auto lo = spec.limits.p_min.find(p);
            if (lo != spec.limits.p_min.end()) worst(lo->second[i] - series[i], "p_min " + p);
        }
    }

    // storage recursion, bounds, charging cap
    for (size_t st = 0; st < spec.stores.size(); ++st) {
        const auto& sto = spec.stores[st];
        const double soc0 = st < inputs.soc_init.size() ? inputs.soc_init[st] : sto.soc_init;
        worst(std::abs(plan.soc[st][0] - soc0), "soc init st=" + std::to_string(st));
        for (int i = 0; i < n; ++i) {
            worst(sto.v_min[i] - plan.v_sto[st][i], "v_min st=" + std::to_string(st));
            worst(plan.v_sto[st][i] - sto.v_max[i], "v_max st=" + std::to_string(st));
            worst(sto.u_min[i] - plan.u_sto[st][i], "u_min st=" + std::to_string(st));
            worst(plan.u_sto[st][i] - sto.u_max[i], "u_max st=" + std::to_string(st));
            worst(sto.soc_min[i] - plan.soc[st][i], "soc_min st=" + std::to_string(st));
            worst(plan.soc[st][i] - sto.soc_max[i], "soc_max st=" + std::to_string(st));
            if (i + 1 < n) {
                const double next = sto.eta_stl * plan.soc[st][i] +
                                    dt_h * (sto.eta_stv * plan.v_sto[st][i] - plan.u_sto[st][i] / sto.eta_stu);
                worst(std::abs(plan.soc[st][i + 1] - next), "soc recursion st=" + std::to_string(st) + " i=" + std::to_string(i));
            }
        }
    }
    {
        std::set<std::string> store_carriers;
        for (const auto& st : spec.stores) store_carriers.insert(st.carrier);
        for (const auto& q : store_carriers)
            for (int i = 0; i < n; ++i) {
                double charge = 0.0, connected = 0.0;
                for (size_t st = 0; st < spec.stores.size(); ++st)
                    if (spec.stores[st].carrier == q) charge += plan.v_sto[st][i];
                for (size_t s = 0; s < spec.supplies.size(); ++s) {
                    if (!spec.supplies[s].store_connected) continue;
                    auto it = plan.u_sup[s].find(q);
                    if (it != plan.u_sup[s].end()) connected += it->second[i];
                }
                worst(charge - connected, "store cap " + q + " i=" + std::to_string(i));
            }
    }

    // state-space recursion, outputs, slack definitions
    int m_at = 0;
    for (const auto& d : spec.demands) {
        const auto* ss = std::get_if<StateSpaceDemand>(&d);
        if (!ss) { continue; }
        const auto& model = ss->model;
        const Vector x0 = m_at < static_cast<int>(inputs.x_init.size()) && !inputs.x_init[m_at].empty()
                              ? inputs.x_init[m_at]
                              : ss->x_init;
        for (int r = 0; r < model.order(); ++r)
            worst(std::abs(plan.x[m_at](r, 0) - x0[r]), "x init m=" + std::to_string(m_at));
        for (int i = 0; i + 1 < n; ++i) {
            Vector u_in(model.n_inputs(), 0.0);
            for (int q = 0; q < model.n_inputs(); ++q) {
                const std::string& carrier = model.input_names[q];
                for (size_t st = 0; st < spec.stores.size(); ++st)
                    if (spec.stores[st].carrier == carrier) u_in[q] += plan.u_sto[st][i] - plan.v_sto[st][i];
                for (size_t s = 0; s < spec.supplies.size(); ++s) {
                    auto it = plan.u_sup[s].find(carrier);
                    if (it != plan.u_sup[s].end()) u_in[q] += it->second[i];
                }
                for (const auto& dd : spec.demands)
                    if (const auto* ts = std::get_if<TimeSeriesDemand>(&dd))
                        if (ts->carrier == carrier) u_in[q] -= ts->dem[i];
            }
            for (int r = 0; r < model.order(); ++r) {
                double next = 0.0;
                for (int c = 0; c < model.order(); ++c) next += model.A(r, c) * plan.x[m_at](c, i);
                for (int q = 0; q < model.n_inputs(); ++q) next += model.B[q][r] * u_in[q];
                for (int ex = 0; ex < model.n_disturbances(); ++ex)
                    next += model.E[ex][r] * inputs.disturbances[m_at](ex, i);
                worst(std::abs(plan.x[m_at](r, i + 1) - next), "x recursion m=" + std::to_string(m_at) + " i=" + std::to_string(i));
            }
        }
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < model.n_outputs(); ++r) {
                double y = 0.0;
                for (int c = 0; c < model.order(); ++c) y += model.C(r, c) * plan.x[m_at](c, i);
                worst(std::abs(plan.y[m_at](r, i) - y), "y identity m=" + std::to_string(m_at));
                const double eps = plan.eps[m_at](r, i);
                worst(-eps, "eps nonneg");
                if (ss->band[r] != BandSide::lower_only)
                    worst(y - ss->sp_up[r][i] - eps, "slack upper m=" + std::to_string(m_at) + " i=" + std::to_string(i));
                if (ss->band[r] != BandSide::upper_only)
                    worst(ss->sp_lo[r][i] - y - eps, "slack lower m=" + std::to_string(m_at) + " i=" + std::to_string(i));
            }
        ++m_at;
    }

    // static balance for carriers no model consumes
    {
        std::set<std::string> ss_q;
        for (const auto& d : spec.demands)
            if (const auto* ss = std::get_if<StateSpaceDemand>(&d))
                for (const auto& q : ss->model.input_names) ss_q.insert(q);
        std::set<std::string> carriers;
        for (const auto& s : spec.supplies)
            for (const auto& c : s.conversions) carriers.insert(c.carrier);
        for (const auto& st : spec.stores) carriers.insert(st.carrier);
        for (const auto& d : spec.demands)
            if (const auto* ts = std::get_if<TimeSeriesDemand>(&d)) carriers.insert(ts->carrier);
        for (const auto& q : carriers) {
            if (ss_q.count(q)) continue;
            for (int i = 0; i < n; ++i) {
                double lhs = 0.0;
                for (size_t s = 0; s < spec.supplies.size(); ++s) {
                    auto it = plan.u_sup[s].find(q);
                    if (it != plan.u_sup[s].end()) lhs += it->second[i];
                }
                for (size_t st = 0; st < spec.stores.size(); ++st)
                    if (spec.stores[st].carrier == q) lhs += plan.u_sto[st][i] - plan.v_sto[st][i];
                double dem = 0.0;
                for (const auto& d2 : spec.demands)
                    if (const auto* ts = std::get_if<TimeSeriesDemand>(&d2))
                        if (ts->carrier == q) dem += ts->dem[i];
                worst(std::abs(lhs - dem), "balance " + q + " i=" + std::to_string(i));
            }
        }
    }

    // objective recomposition: J = sum_i phi . (J_nrg, J_pen, J_slack)
    double j_nrg = 0.0, j_pen = 0.0, j_slack = 0.0;
    for (size_t s = 0; s < spec.supplies.size(); ++s)
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            const auto& conv = spec.supplies[s].conversions[c];
            for (const auto& [w, per_p] : spec.limits.alpha) {
                auto it = per_p.find(conv.resource);
                if (it == per_p.end()) continue;
                for (int i = 0; i < n; ++i) j_nrg += it->second[i] * plan.v_sup[s][c][i];
            }
        }
    for (size_t st = 0; st < spec.stores.size(); ++st)
        for (int i = 0; i < n; ++i) j_pen += spec.stores[st].beta[i] * plan.soc[st][i];
    double gap_bound = 0.0;
    {
        const double h = opt.slack.eps_max / opt.slack.segments;
        int m2 = 0;
        for (const auto& d : spec.demands)
            if (const auto* ss = std::get_if<StateSpaceDemand>(&d)) {
                for (int r = 0; r < ss->model.n_outputs(); ++r)
                    for (int i = 0; i < n; ++i) {
                        const double e = plan.eps[m2](r, i);
                        j_slack += ss->gamma * e * e;
                        gap_bound += spec.phi_slack * ss->gamma * h * h / 4.0;
                    }
                ++m2;
            }
    }
    const double recomposed = spec.phi_nrg * j_nrg + spec.phi_pen * j_pen + spec.phi_slack * j_slack;
    res.objective_gap = std::abs(recomposed - plan.objective);
    res.objective_gap_bound = gap_bound;
    return res;
}

}  // namespace sems::testing
