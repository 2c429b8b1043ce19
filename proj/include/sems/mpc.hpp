#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sems/core.hpp"
#include "sems/lp.hpp"
#include "sems/ssm.hpp"

namespace sems {

/// Per-solve data the receding-horizon loop refreshes: measured initial states
/// and disturbance forecasts. Demand/availability/weight series that vary with
/// forecasts are overlaid directly on the SubsystemSpec before building.
struct MpcInputs {
    std::vector<double> soc_init;        // per store; empty -> use spec values
    std::vector<Vector> x_init;          // per state-space demand; empty -> spec values
    std::vector<Matrix> disturbances;    // per state-space demand: n_dist x N
};

struct MpcOptions {
    PwlQuadratic slack{8, 5.0};  // quadratic band-violation penalty approximation
    SolveOptions solver;
};

/// Bijection between named decision variables and LP columns.
struct VariableIndex {
    enum class Kind : char { v_sup, v_sto, u_sto, soc, x, eps_seg };
    struct Entry {
        Kind kind;
        int a = -1;   // supply / store / model index
        int b = -1;   // conversion / state-row / output index
        int i = -1;   // horizon step (soc entries use the step the level applies to, 1..N)
        int seg = -1; // PWL segment for eps columns
    };
    std::vector<Entry> by_column;

    std::vector<std::vector<int>> v_sup_base;  // [s][conv] -> column of step 0
    std::vector<int> v_sto_base, u_sto_base, soc_base;
    std::vector<int> x_base;                               // [m] -> column of x_{1,state 0}
    std::vector<std::vector<std::vector<std::vector<int>>>> eps_cols;  // [m][r][i] -> segment columns

    int v_sup(int s, int conv, int i) const { return v_sup_base[s][conv] + i; }
    int v_sto(int st, int i) const { return v_sto_base[st] + i; }
    int u_sto(int st, int i) const { return u_sto_base[st] + i; }
    int soc(int st, int level_step) const { return soc_base[st] + level_step - 1; }  // level_step in 1..N
    int x(int m, int state, int i) const { return x_base[m] + (i - 1) * order_[m] + state; }  // i in 1..N-1

    std::vector<int> order_;  // model orders, for x addressing
};

struct BuildResult {
    LinearProgram lp;
    VariableIndex index;
    double objective_constant = 0.0;
};

namespace mpc_detail {

inline bool is_ss(const DemandSpec& d) { return std::holds_alternative<StateSpaceDemand>(d); }

/// carriers consumed by some state-space model input
inline std::set<std::string> ss_carriers(const SubsystemSpec& spec) {
    std::set<std::string> out;
    for (const auto& d : spec.demands)
        if (const auto* ss = std::get_if<StateSpaceDemand>(&d))
            for (const auto& q : ss->model.input_names) out.insert(q);
    return out;
}

inline std::set<std::string> all_carriers(const SubsystemSpec& spec) {
    std::set<std::string> out;
    for (const auto& s : spec.supplies)
        for (const auto& c : s.conversions) out.insert(c.carrier);
    for (const auto& st : spec.stores) out.insert(st.carrier);
    for (const auto& d : spec.demands) {
        if (const auto* ts = std::get_if<TimeSeriesDemand>(&d)) out.insert(ts->carrier);
        else
            for (const auto& q : std::get<StateSpaceDemand>(d).model.input_names) out.insert(q);
    }
    return out;
}

inline double static_demand(const SubsystemSpec& spec, const std::string& q, int i) {
    double s = 0.0;
    for (const auto& d : spec.demands)
        if (const auto* ts = std::get_if<TimeSeriesDemand>(&d))
            if (ts->carrier == q) s += ts->dem[i];
    return s;
}

}  // namespace mpc_detail

/// Assemble one subsystem's horizon problem: supply conversion and bounds,
/// per-resource consumption windows, storage dynamics and bounds, the
/// store-charging cap, state-space demand dynamics with soft output bands, the
/// static energy balance for carriers no model consumes, and the weighted
/// objective with PWL-expanded quadratic slack.
inline BuildResult build_subproblem(const SubsystemSpec& spec, const MpcInputs& inputs = {},
                                    const MpcOptions& opt = {}) {
    using namespace mpc_detail;
    {
        auto v = validate_spec(spec);
        if (!v.empty()) throw std::invalid_argument("build_subproblem: spec invalid: " + to_string(v.front()));
    }
    const int n = spec.grid.steps;
    const double dt_h = spec.grid.dt_hours();
    const int n_sup = static_cast<int>(spec.supplies.size());
    const int n_sto = static_cast<int>(spec.stores.size());

    std::vector<const StateSpaceDemand*> models;
    std::vector<int> model_demand_idx;
    for (size_t d = 0; d < spec.demands.size(); ++d)
        if (const auto* ss = std::get_if<StateSpaceDemand>(&spec.demands[d])) {
            models.push_back(ss);
            model_demand_idx.push_back(static_cast<int>(d));
        }
    const int n_mod = static_cast<int>(models.size());

    // initial conditions
    std::vector<double> soc0(n_sto);
    for (int st = 0; st < n_sto; ++st)
        soc0[st] = st < static_cast<int>(inputs.soc_init.size()) ? inputs.soc_init[st] : spec.stores[st].soc_init;
    std::vector<Vector> x0(n_mod);
    std::vector<Matrix> dist(n_mod);
    for (int m = 0; m < n_mod; ++m) {
        x0[m] = m < static_cast<int>(inputs.x_init.size()) && !inputs.x_init[m].empty() ? inputs.x_init[m]
                                                                                        : models[m]->x_init;
        if (static_cast<int>(x0[m].size()) != models[m]->model.order())
            throw std::invalid_argument("build_subproblem: x_init size mismatch for demand '" + models[m]->id + "'");
        const int n_d = models[m]->model.n_disturbances();
        if (m < static_cast<int>(inputs.disturbances.size()) && !inputs.disturbances[m].empty()) {
            dist[m] = inputs.disturbances[m];
            if (dist[m].rows != n_d || dist[m].cols != n)
                throw std::invalid_argument("build_subproblem: missing forecast channel for demand '" +
                                            models[m]->id + "' (need " + std::to_string(n_d) + " channels x " +
                                            std::to_string(n) + " steps)");
        } else {
            if (n_d > 0)
                throw std::invalid_argument("build_subproblem: missing forecast channel for demand '" +
                                            models[m]->id + "'");
            dist[m] = Matrix(0, n);
        }
    }

    // pre-solve static balance screen: best-case supply + discharge vs demand
    for (const auto& q : all_carriers(spec)) {
        if (ss_carriers(spec).count(q)) continue;
        for (int i = 0; i < n; ++i) {
            const double dem = static_demand(spec, q, i);
            if (dem <= 0) continue;
            double cap = 0.0;
            for (const auto& s : spec.supplies)
                for (const auto& c : s.conversions)
                    if (c.carrier == q) cap += c.tech_max[i] * c.eta[i];
            for (const auto& st : spec.stores)
                if (st.carrier == q) cap += st.u_max[i];
            if (cap < dem - 1e-9)
                throw std::runtime_error("build_subproblem: static balance infeasible at step " + std::to_string(i) +
                                         " for carrier '" + q + "' (demand " + std::to_string(dem) +
                                         " kW, capacity " + std::to_string(cap) + " kW)");
        }
    }

    LinearProgram lp;
    VariableIndex ix;
    ix.order_.resize(n_mod);
    double obj_constant = 0.0;

    // --- columns ---------------------------------------------------------
    ix.v_sup_base.resize(n_sup);
    for (int s = 0; s < n_sup; ++s)
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            const auto& conv = spec.supplies[s].conversions[c];
            ix.v_sup_base[s].push_back(lp.n);
            for (int i = 0; i < n; ++i) {
                double cost = 0.0;
                auto it_alpha = spec.limits.alpha.begin();
                for (; it_alpha != spec.limits.alpha.end(); ++it_alpha) {
                    auto pw = it_alpha->second.find(conv.resource);
                    if (pw != it_alpha->second.end()) cost += pw->second[i];
                }
                lp.add_variable(spec.phi_nrg * cost, conv.tech_min[i], conv.tech_max[i]);
                ix.by_column.push_back({VariableIndex::Kind::v_sup, s, static_cast<int>(c), i, -1});
            }
        }
    for (int st = 0; st < n_sto; ++st) {
        const auto& sto = spec.stores[st];
        ix.v_sto_base.push_back(lp.n);
        for (int i = 0; i < n; ++i) {
            lp.add_variable(0.0, sto.v_min[i], sto.v_max[i]);
            ix.by_column.push_back({VariableIndex::Kind::v_sto, st, -1, i, -1});
        }
        ix.u_sto_base.push_back(lp.n);
        for (int i = 0; i < n; ++i) {
            lp.add_variable(0.0, sto.u_min[i], sto.u_max[i]);
            ix.by_column.push_back({VariableIndex::Kind::u_sto, st, -1, i, -1});
        }
        ix.soc_base.push_back(lp.n);
        for (int level = 1; level <= n; ++level) {
            const int bnd = std::min(level, n - 1);  // level N reuses the last in-horizon bounds
            double lo = sto.soc_min[bnd], hi = sto.soc_max[bnd];
            if (level == n && sto.terminal_soc_geq_init) lo = std::max(lo, soc0[st]);
            const double beta = level <= n - 1 ? sto.beta[level] : 0.0;
            lp.add_variable(spec.phi_pen * beta, lo, hi);
            ix.by_column.push_back({VariableIndex::Kind::soc, st, -1, level, -1});
        }
        obj_constant += spec.phi_pen * sto.beta[0] * soc0[st];
    }
    ix.x_base.resize(n_mod);
    for (int m = 0; m < n_mod; ++m) {
        const int order = models[m]->model.order();
        ix.order_[m] = order;
        ix.x_base[m] = lp.n;
        for (int i = 1; i <= n - 1; ++i)
            for (int r = 0; r < order; ++r) {
                lp.add_variable(0.0, -kLpInfinity, kLpInfinity);
                ix.by_column.push_back({VariableIndex::Kind::x, m, r, i, -1});
            }
    }
    // slack variables, one per penalised output step; expanded to segments below
    std::vector<int> slack_cols;
    Vector slack_weights;
    std::vector<std::vector<std::vector<int>>> eps_plain(n_mod);  // [m][r][i] -> eps column
    for (int m = 0; m < n_mod; ++m) {
        const int r_out = models[m]->model.n_outputs();
        eps_plain[m].assign(r_out, std::vector<int>(n, -1));
        for (int r = 0; r < r_out; ++r)
            for (int i = 0; i < n; ++i) {
                const int col = lp.add_variable(0.0, 0.0, kLpInfinity);
                eps_plain[m][r][i] = col;
                slack_cols.push_back(col);
                slack_weights.push_back(spec.phi_slack * models[m]->gamma);
                ix.by_column.push_back({VariableIndex::Kind::eps_seg, m, r, i, 0});
            }
    }

    // --- rows (deterministic order) ---------------------------------------
    // storage dynamics: soc_{i+1} = eta_stl soc_i + dt (eta_stv v_i - u_i / eta_stu)
    for (int st = 0; st < n_sto; ++st) {
        const auto& sto = spec.stores[st];
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<int, double>> row{{ix.soc(st, i + 1), 1.0},
                                                    {ix.v_sto(st, i), -dt_h * sto.eta_stv},
                                                    {ix.u_sto(st, i), dt_h / sto.eta_stu}};
            double rhs = 0.0;
            if (i == 0) rhs = sto.eta_stl * soc0[st];
            else row.push_back({ix.soc(st, i), -sto.eta_stl});
            lp.add_row(std::move(row), RowSense::eq, rhs);
        }
    }
    // store-charging cap per carrier with stores
    {
        std::set<std::string> store_carriers;
        for (const auto& st : spec.stores) store_carriers.insert(st.carrier);
        for (const auto& q : store_carriers)
            for (int i = 0; i < n; ++i) {
                std::vector<std::pair<int, double>> row;
                for (int st = 0; st < n_sto; ++st)
                    if (spec.stores[st].carrier == q) row.push_back({ix.v_sto(st, i), 1.0});
                for (int s = 0; s < n_sup; ++s) {
                    if (!spec.supplies[s].store_connected) continue;
                    for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
                        const auto& conv = spec.supplies[s].conversions[c];
                        if (conv.carrier == q && conv.eta[i] != 0.0)
                            row.push_back({ix.v_sup(s, static_cast<int>(c), i), -conv.eta[i]});
                    }
                }
                lp.add_row(std::move(row), RowSense::le, 0.0);
            }
    }
    // per-resource consumption windows
    for (const auto& [p, hi] : spec.limits.p_max)
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<int, double>> row;
            for (int s = 0; s < n_sup; ++s)
                for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c)
                    if (spec.supplies[s].conversions[c].resource == p)
                        row.push_back({ix.v_sup(s, static_cast<int>(c), i), 1.0});
            if (row.empty()) continue;
            lp.add_row(std::move(row), RowSense::le, hi[i]);
        }
    for (const auto& [p, lo] : spec.limits.p_min)
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<int, double>> row;
            for (int s = 0; s < n_sup; ++s)
                for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c)
                    if (spec.supplies[s].conversions[c].resource == p)
                        row.push_back({ix.v_sup(s, static_cast<int>(c), i), 1.0});
            if (row.empty()) continue;
            lp.add_row(std::move(row), RowSense::ge, lo[i]);
        }

    // state-space dynamics; u_in_q = net store flow + generated supply - static draws of q
    for (int m = 0; m < n_mod; ++m) {
        const auto& model = models[m]->model;
        const int order = model.order();
        for (int i = 0; i + 1 <= n - 1; ++i)
            for (int r = 0; r < order; ++r) {
                // row: x_{i+1,r} - A x_i - B u_in_i = E d_i   (constants on the rhs)
                std::vector<std::pair<int, double>> row{{ix.x(m, r, i + 1), 1.0}};
                double rhs = 0.0;
                if (i == 0)
                    for (int c = 0; c < order; ++c) rhs += model.A(r, c) * x0[m][c];
                else
                    for (int c = 0; c < order; ++c)
                        if (model.A(r, c) != 0.0) row.push_back({ix.x(m, c, i), -model.A(r, c)});
                for (int q = 0; q < model.n_inputs(); ++q) {
                    const std::string& carrier = model.input_names[q];
                    const double b = model.B[q][r];
                    if (b == 0.0) continue;
                    for (int st = 0; st < n_sto; ++st)
                        if (spec.stores[st].carrier == carrier) {
                            row.push_back({ix.u_sto(st, i), -b});
                            row.push_back({ix.v_sto(st, i), b});
                        }
                    for (int s = 0; s < n_sup; ++s)
                        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
                            const auto& conv = spec.supplies[s].conversions[c];
                            if (conv.carrier == carrier && conv.eta[i] != 0.0)
                                row.push_back({ix.v_sup(s, static_cast<int>(c), i), -b * conv.eta[i]});
                        }
                    rhs -= b * static_demand(spec, carrier, i);
                }
                for (int ex = 0; ex < model.n_disturbances(); ++ex) rhs += model.E[ex][r] * dist[m](ex, i);
                lp.add_row(std::move(row), RowSense::eq, rhs);
            }
    }
    // soft output band: eps >= y - sp_up, eps >= sp_lo - y (sides per band flag)
    for (int m = 0; m < n_mod; ++m) {
        const auto& model = models[m]->model;
        const auto& dspec = *models[m];
        for (int r = 0; r < model.n_outputs(); ++r)
            for (int i = 0; i < n; ++i) {
                const double y_const = i == 0 ? [&] {
                    double s = 0.0;
                    for (int c = 0; c < model.order(); ++c) s += model.C(r, c) * x0[m][c];
                    return s;
                }() : 0.0;
                auto y_terms = [&](double sign, std::vector<std::pair<int, double>>& row) {
                    if (i == 0) return;  // y_0 is a constant
                    for (int c = 0; c < model.order(); ++c)
                        if (model.C(r, c) != 0.0) row.push_back({ix.x(m, c, i), sign * model.C(r, c)});
                };
                if (dspec.band[r] != BandSide::lower_only) {
                    std::vector<std::pair<int, double>> row{{eps_plain[m][r][i], 1.0}};
                    y_terms(-1.0, row);
                    lp.add_row(std::move(row), RowSense::ge, (i == 0 ? y_const : 0.0) - dspec.sp_up[r][i]);
                }
                if (dspec.band[r] != BandSide::upper_only) {
                    std::vector<std::pair<int, double>> row{{eps_plain[m][r][i], 1.0}};
                    y_terms(1.0, row);
                    lp.add_row(std::move(row), RowSense::ge, dspec.sp_lo[r][i] - (i == 0 ? y_const : 0.0));
                }
            }
    }
    // static balance for carriers no state-space model consumes
    {
        const auto ss_q = ss_carriers(spec);
        for (const auto& q : all_carriers(spec)) {
            if (ss_q.count(q)) continue;
            for (int i = 0; i < n; ++i) {
                std::vector<std::pair<int, double>> row;
                for (int s = 0; s < n_sup; ++s)
                    for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
                        const auto& conv = spec.supplies[s].conversions[c];
                        if (conv.carrier == q && conv.eta[i] != 0.0)
                            row.push_back({ix.v_sup(s, static_cast<int>(c), i), conv.eta[i]});
                    }
                for (int st = 0; st < n_sto; ++st)
                    if (spec.stores[st].carrier == q) {
                        row.push_back({ix.u_sto(st, i), 1.0});
                        row.push_back({ix.v_sto(st, i), -1.0});
                    }
                lp.add_row(std::move(row), RowSense::eq, static_demand(spec, q, i));
            }
        }
    }

    // quadratic slack costs via the PWL expansion
    auto expansion = expand_quadratic_slack(lp, slack_cols, slack_weights, opt.slack);
    BuildResult out{std::move(expansion.lp), std::move(ix), obj_constant};
    // record segment groups and extend the column map
    out.index.eps_cols.assign(n_mod, {});
    size_t group_at = 0;
    for (int m = 0; m < n_mod; ++m) {
        const int r_out = models[m]->model.n_outputs();
        out.index.eps_cols[m].assign(r_out, std::vector<std::vector<int>>(n));
        for (int r = 0; r < r_out; ++r)
            for (int i = 0; i < n; ++i) {
                out.index.eps_cols[m][r][i] = expansion.segment_groups[group_at++];
                for (size_t seg = 1; seg < out.index.eps_cols[m][r][i].size(); ++seg)
                    out.index.by_column.push_back({VariableIndex::Kind::eps_seg, m, r, i, static_cast<int>(seg)});
            }
    }
    if (static_cast<int>(out.index.by_column.size()) != out.lp.n)
        throw std::logic_error("build_subproblem: variable index lost bijectivity");
    return out;
}

// ---------------------------------------------------------------------------
// Solve + plan extraction
// ---------------------------------------------------------------------------

namespace mpc_detail {

inline std::string infeasibility_report(const SubsystemSpec& spec) {
    // name the first step where demand cannot be balanced under the resource caps
    const int n = spec.grid.steps;
    for (int i = 0; i < n; ++i)
        for (const auto& q : all_carriers(spec)) {
            double dem = static_demand(spec, q, i);
            if (dem <= 0) continue;
            double cap = 0.0;
            for (const auto& s : spec.supplies)
                for (const auto& c : s.conversions)
                    if (c.carrier == q) {
                        double draw_cap = c.tech_max[i];
                        auto pm = spec.limits.p_max.find(c.resource);
                        if (pm != spec.limits.p_max.end()) draw_cap = std::min(draw_cap, pm->second[i]);
                        cap += draw_cap * c.eta[i];
                    }
            for (const auto& st : spec.stores)
                if (st.carrier == q) cap += st.u_max[i];
            if (cap < dem - 1e-9)
                return "balance violated first at step " + std::to_string(i) + " carrier '" + q + "' (demand " +
                       std::to_string(dem) + " kW vs capacity " + std::to_string(cap) + " kW)";
        }
    return "no single-step balance violation; infeasibility involves coupled storage/band constraints";
}

}  // namespace mpc_detail

inline OptimalPlan extract_plan(const SubsystemSpec& spec, const BuildResult& built, const LpSolution& sol,
                                const MpcInputs& inputs, const MpcOptions& opt) {
    using namespace mpc_detail;
    const int n = spec.grid.steps;
    OptimalPlan plan;
    plan.iterations = sol.iterations;
    switch (sol.status) {
        case LpStatus::optimal: plan.status = PlanStatus::optimal; break;
        case LpStatus::infeasible:
            plan.status = PlanStatus::infeasible;
            plan.diagnostic = infeasibility_report(spec);
            return plan;
        case LpStatus::unbounded:
            plan.status = PlanStatus::unbounded;
            plan.diagnostic = "objective unbounded; check weight signs";
            return plan;
    }
    const auto& ix = built.index;
    const auto& x = sol.x;

    plan.v_sup.resize(spec.supplies.size());
    plan.u_sup.resize(spec.supplies.size());
    for (size_t s = 0; s < spec.supplies.size(); ++s) {
        plan.v_sup[s].resize(spec.supplies[s].conversions.size());
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            const auto& conv = spec.supplies[s].conversions[c];
            Series v(n);
            for (int i = 0; i < n; ++i) v[i] = x[ix.v_sup(static_cast<int>(s), static_cast<int>(c), i)];
            auto& u = plan.u_sup[s][conv.carrier];
            if (u.empty()) u.assign(n, 0.0);
            for (int i = 0; i < n; ++i) u[i] += conv.eta[i] * v[i];
            auto& p = plan.psub[conv.resource];
            if (p.empty()) p.assign(n, 0.0);
            for (int i = 0; i < n; ++i) p[i] += v[i];
            plan.v_sup[s][c] = std::move(v);
        }
    }
    for (size_t st = 0; st < spec.stores.size(); ++st) {
        Series v(n), u(n), soc(n);
        const double soc0 = st < inputs.soc_init.size() ? inputs.soc_init[st] : spec.stores[st].soc_init;
        for (int i = 0; i < n; ++i) {
            v[i] = x[ix.v_sto(static_cast<int>(st), i)];
            u[i] = x[ix.u_sto(static_cast<int>(st), i)];
            soc[i] = i == 0 ? soc0 : x[ix.soc(static_cast<int>(st), i)];
        }
        plan.v_sto.push_back(std::move(v));
        plan.u_sto.push_back(std::move(u));
        plan.soc.push_back(std::move(soc));
    }
    int m_at = 0;
    for (const auto& d : spec.demands) {
        const auto* ss = std::get_if<StateSpaceDemand>(&d);
        if (!ss) continue;
        const int order = ss->model.order();
        const int r_out = ss->model.n_outputs();
        const Vector x0v = m_at < static_cast<int>(inputs.x_init.size()) && !inputs.x_init[m_at].empty()
                               ? inputs.x_init[m_at]
                               : ss->x_init;
        Matrix xs(order, n), ys(r_out, n), eps(r_out, n);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < order; ++r) xs(r, i) = i == 0 ? x0v[r] : x[ix.x(m_at, r, i)];
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < r_out; ++r) {
                double s = 0.0;
                for (int c = 0; c < order; ++c) s += ss->model.C(r, c) * xs(c, i);
                ys(r, i) = s;
                double e = 0.0;
                for (int col : ix.eps_cols[m_at][r][i]) e += x[col];
                eps(r, i) = e;
            }
        plan.x.push_back(std::move(xs));
        plan.y.push_back(std::move(ys));
        plan.eps.push_back(std::move(eps));
        ++m_at;
    }

    // objective decomposition recomputed from trajectories
    plan.objective = sol.objective + built.objective_constant;
    plan.j_nrg = 0.0;
    for (size_t s = 0; s < spec.supplies.size(); ++s)
        for (size_t c = 0; c < spec.supplies[s].conversions.size(); ++c) {
            const auto& conv = spec.supplies[s].conversions[c];
            for (const auto& [w, per_p] : spec.limits.alpha) {
                auto it = per_p.find(conv.resource);
                if (it == per_p.end()) continue;
                for (int i = 0; i < n; ++i) plan.j_nrg += it->second[i] * plan.v_sup[s][c][i];
            }
        }
    plan.j_pen = 0.0;
    for (size_t st = 0; st < spec.stores.size(); ++st)
        for (int i = 0; i < n; ++i) plan.j_pen += spec.stores[st].beta[i] * plan.soc[st][i];
    plan.j_slack = 0.0;
    {
        std::vector<double> gammas;
        for (const auto& d : spec.demands)
            if (const auto* ss = std::get_if<StateSpaceDemand>(&d)) gammas.push_back(ss->gamma);
        for (int m = 0; m < m_at; ++m)
            for (int r = 0; r < plan.eps[m].rows; ++r)
                for (int i = 0; i < n; ++i) plan.j_slack += gammas[m] * plan.eps[m](r, i) * plan.eps[m](r, i);
    }
    (void)opt;
    return plan;
}

/// Build, solve and extract in one call. A persistent SimplexSolver may be
/// passed to benefit from warm starts across receding-horizon re-solves.
inline OptimalPlan solve_subproblem(const SubsystemSpec& spec, const MpcInputs& inputs = {},
                                    const MpcOptions& opt = {}, SimplexSolver* solver = nullptr) {
    auto built = build_subproblem(spec, inputs, opt);
    const LpSolution sol = solver ? solver->solve(built.lp) : solve_lp(built.lp, opt.solver);
    return extract_plan(spec, built, sol, inputs, opt);
}

// ---------------------------------------------------------------------------
// First-step extraction
// ---------------------------------------------------------------------------

/// The i=0 slice of every controllable trajectory, ready to send to the plant.
struct SetpointCommand {
    Timestamp t = 0;
    std::vector<std::map<std::string, double>> u_sup;  // [s][carrier] generated kW
    std::vector<std::vector<double>> v_sup;            // [s][conv] resource kW
    std::vector<double> v_sto, u_sto;                  // [st] kW
};

inline SetpointCommand apply_first_step(const SubsystemSpec& spec, const OptimalPlan& plan) {
    if (plan.status != PlanStatus::optimal)
        throw std::logic_error("apply_first_step: plan is not optimal (" + std::string(to_string(plan.status)) + ")");
    SetpointCommand cmd;
    cmd.t = spec.grid.start;
    cmd.u_sup.resize(spec.supplies.size());
    cmd.v_sup.resize(spec.supplies.size());
    for (size_t s = 0; s < spec.supplies.size(); ++s) {
        for (const auto& [q, series] : plan.u_sup[s]) cmd.u_sup[s][q] = series[0];
        for (const auto& conv : plan.v_sup[s]) cmd.v_sup[s].push_back(conv[0]);
    }
    for (const auto& v : plan.v_sto) cmd.v_sto.push_back(v[0]);
    for (const auto& u : plan.u_sto) cmd.u_sto.push_back(u[0]);
    return cmd;
}

// ---------------------------------------------------------------------------
// Plan CSV export
// ---------------------------------------------------------------------------

inline std::string plan_to_csv(const SubsystemSpec& spec, const OptimalPlan& plan) {
    std::string out = "i";
    char buf[64];
    for (size_t s = 0; s < spec.supplies.size(); ++s) {
        for (const auto& conv : spec.supplies[s].conversions)
            out += ",v_sup." + spec.supplies[s].id + "." + conv.resource + "->" + conv.carrier;
        for (const auto& [q, _] : plan.u_sup[s]) out += ",u_sup." + spec.supplies[s].id + "." + q;
    }
    for (const auto& st : spec.stores)
        out += ",v_sto." + st.id + ",u_sto." + st.id + ",soc." + st.id;
    int m_at = 0;
    for (const auto& d : spec.demands)
        if (const auto* ss = std::get_if<StateSpaceDemand>(&d)) {
            for (int r = 0; r < ss->model.order(); ++r) out += ",x." + ss->id + "." + ss->model.state_names[r];
            for (int r = 0; r < ss->model.n_outputs(); ++r) {
                out += ",y." + ss->id + "." + ss->model.output_names[r];
                out += ",eps." + ss->id + "." + ss->model.output_names[r];
            }
            ++m_at;
        }
    for (const auto& [p, _] : plan.psub) out += ",psub." + p;
    out += "\n";
    const int n = spec.grid.steps;
    for (int i = 0; i < n; ++i) {
        out += std::to_string(i);
        auto add = [&](double v) {
            std::snprintf(buf, sizeof buf, ",%.6f", v);
            out += buf;
        };
        for (size_t s = 0; s < spec.supplies.size(); ++s) {
            for (const auto& conv : plan.v_sup[s]) add(conv[i]);
            for (const auto& [_, series] : plan.u_sup[s]) add(series[i]);
        }
        for (size_t st = 0; st < spec.stores.size(); ++st) {
            add(plan.v_sto[st][i]);
            add(plan.u_sto[st][i]);
            add(plan.soc[st][i]);
        }
        for (int m = 0; m < m_at; ++m) {
            for (int r = 0; r < plan.x[m].rows; ++r) add(plan.x[m](r, i));
            for (int r = 0; r < plan.y[m].rows; ++r) {
                add(plan.y[m](r, i));
                add(plan.eps[m](r, i));
            }
        }
        for (const auto& [_, series] : plan.psub) add(series[i]);
        out += "\n";
    }
    return out;
}

}  // namespace sems
