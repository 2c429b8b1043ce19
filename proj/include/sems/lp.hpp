#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sems/linalg.hpp"

namespace sems {

/// Sentinel for infinite variable bounds.
constexpr double kLpInfinity = 1e30;

inline bool lp_is_finite(double v) { return v > -kLpInfinity && v < kLpInfinity; }

enum class RowSense : char { le, eq, ge };

struct LpRow {
    std::vector<std::pair<int, double>> coeffs;  // sparse (variable index, coefficient)
    RowSense sense = RowSense::le;
    double rhs = 0.0;
};

/// Canonical bounded-variable linear program: min c'x s.t. row senses, lb <= x <= ub.
struct LinearProgram {
    int n = 0;
    Vector c, lb, ub;
    std::vector<LpRow> rows;

    int add_variable(double cost, double lower, double upper) {
        c.push_back(cost);
        lb.push_back(lower);
        ub.push_back(upper);
        return n++;
    }
    void add_row(std::vector<std::pair<int, double>> coeffs, RowSense sense, double rhs) {
        rows.push_back({std::move(coeffs), sense, rhs});
    }

    void validate() const {
        for (int j = 0; j < n; ++j) {
            if (!(lb[j] <= ub[j])) throw std::invalid_argument("LinearProgram: lb > ub for variable " + std::to_string(j));
            if (!std::isfinite(c[j]) || std::abs(c[j]) >= kLpInfinity)
                throw std::invalid_argument("LinearProgram: non-finite cost for variable " + std::to_string(j));
        }
        for (size_t r = 0; r < rows.size(); ++r)
            for (const auto& [j, v] : rows[r].coeffs) {
                if (j < 0 || j >= n) throw std::invalid_argument("LinearProgram: row " + std::to_string(r) + " references invalid variable");
                if (!std::isfinite(v)) throw std::invalid_argument("LinearProgram: row " + std::to_string(r) + " has non-finite coefficient");
            }
    }
};

enum class LpStatus : char { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        default: return "unbounded";
    }
}

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    Vector x;
    double objective = 0.0;
    int iterations = 0;
};

struct SolveOptions {
    int max_iterations = 0;       // 0 -> 50 * (n + rows)
    double tol_feas = 1e-7;       // guaranteed feasibility of reported optima
    double tol_pivot = 1e-9;      // smallest acceptable pivot magnitude
    double tol_cost = 1e-9;       // reduced-cost optimality threshold
    int refactor_interval = 2000; // basis-inverse rebuild cadence (numerical hygiene)
};

/// Bounded-variable primal simplex with Bland's rule.
///
/// Rows are converted to equalities with one slack each (<= gives s in [0,inf),
/// >= gives s in (-inf,0], = fixes s at 0); the all-slack basis starts every cold
/// solve and a composite phase 1 drives out bound violations, so no artificial
/// columns are needed. The solver object may be reused: when the next program has
/// the identical coefficient matrix (only costs, bounds or right-hand sides
/// changed), the previous basis and inverse are kept, which is what makes
/// receding-horizon re-solves cheap.
class SimplexSolver {
public:
    explicit SimplexSolver(SolveOptions opt = {}) : opt_(opt) {}

    LpSolution solve(const LinearProgram& lp) {
        lp.validate();
        if (structure_matches(lp)) {
            reload_data(lp);
        } else {
            load(lp);
            cold_basis();
        }
        snap_nonbasic();
        compute_basic_values();
        return run(lp);
    }

    /// Drop any cached basis; the next solve starts cold.
    void invalidate() { have_cached_ = false; }

private:
    enum class VarState : char { basic, at_lower, at_upper, free_zero };

    SolveOptions opt_;
    int n_ = 0, m_ = 0, ntot_ = 0;
    bool have_cached_ = false;
    int cached_n_ = 0;
    std::vector<LpRow> cached_rows_;

    std::vector<std::vector<std::pair<int, double>>> cols_;  // sparse columns incl. slacks
    Vector cost_, lo_, hi_, b_, xval_;
    std::vector<VarState> state_;
    std::vector<int> basis_;         // column occupying each basis row
    std::vector<double> binv_;       // m x m row-major basis inverse
    int pivots_since_refactor_ = 0;

    static double feas_eps(double bound) { return 1e-9 * (1.0 + std::abs(bound)); }

    bool structure_matches(const LinearProgram& lp) const {
        if (!have_cached_ || lp.n != cached_n_ || lp.rows.size() != cached_rows_.size()) return false;
        for (size_t r = 0; r < lp.rows.size(); ++r) {
            if (lp.rows[r].sense != cached_rows_[r].sense) return false;
            if (lp.rows[r].coeffs != cached_rows_[r].coeffs) return false;
        }
        return true;
    }

    void load(const LinearProgram& lp) {
        n_ = lp.n;
        m_ = static_cast<int>(lp.rows.size());
        ntot_ = n_ + m_;
        cached_n_ = n_;
        cached_rows_ = lp.rows;
        have_cached_ = true;

        cols_.assign(ntot_, {});
        for (int r = 0; r < m_; ++r) {
            for (const auto& [j, v] : lp.rows[r].coeffs)
                if (v != 0.0) cols_[j].push_back({r, v});
            cols_[n_ + r].push_back({r, 1.0});
        }
        reload_data(lp);
    }

    void reload_data(const LinearProgram& lp) {
        cost_.assign(ntot_, 0.0);
        lo_.assign(ntot_, 0.0);
        hi_.assign(ntot_, 0.0);
        b_.assign(m_, 0.0);
        for (int j = 0; j < n_; ++j) {
            cost_[j] = lp.c[j];
            lo_[j] = lp.lb[j];
            hi_[j] = lp.ub[j];
        }
        for (int r = 0; r < m_; ++r) {
            b_[r] = lp.rows[r].rhs;
            switch (lp.rows[r].sense) {
                case RowSense::le: lo_[n_ + r] = 0.0; hi_[n_ + r] = kLpInfinity; break;
                case RowSense::ge: lo_[n_ + r] = -kLpInfinity; hi_[n_ + r] = 0.0; break;
                case RowSense::eq: lo_[n_ + r] = 0.0; hi_[n_ + r] = 0.0; break;
            }
        }
    }

    void cold_basis() {
        state_.assign(ntot_, VarState::at_lower);
        basis_.resize(m_);
        for (int r = 0; r < m_; ++r) {
            basis_[r] = n_ + r;
            state_[n_ + r] = VarState::basic;
        }
        binv_.assign(static_cast<size_t>(m_) * m_, 0.0);
        for (int r = 0; r < m_; ++r) binv_[static_cast<size_t>(r) * m_ + r] = 1.0;
        pivots_since_refactor_ = 0;
        for (int j = 0; j < n_; ++j) state_[j] = preferred_bound(j);
    }

    VarState preferred_bound(int j) const {
        const bool lo_f = lp_is_finite(lo_[j]), hi_f = lp_is_finite(hi_[j]);
        if (!lo_f && !hi_f) return VarState::free_zero;
        if (lo_f && hi_f) return std::abs(lo_[j]) <= std::abs(hi_[j]) ? VarState::at_lower : VarState::at_upper;
        return lo_f ? VarState::at_lower : VarState::at_upper;
    }

    void snap_nonbasic() {
        xval_.assign(ntot_, 0.0);
        for (int j = 0; j < ntot_; ++j) {
            if (state_[j] == VarState::basic) continue;
            if (state_[j] == VarState::at_lower && !lp_is_finite(lo_[j])) state_[j] = preferred_bound(j);
            if (state_[j] == VarState::at_upper && !lp_is_finite(hi_[j])) state_[j] = preferred_bound(j);
            switch (state_[j]) {
                case VarState::at_lower: xval_[j] = lo_[j]; break;
                case VarState::at_upper: xval_[j] = hi_[j]; break;
                default: xval_[j] = 0.0; break;
            }
        }
    }

    void compute_basic_values() {
        Vector r = b_;
        for (int j = 0; j < ntot_; ++j) {
            if (state_[j] == VarState::basic || xval_[j] == 0.0) continue;
            for (const auto& [row, v] : cols_[j]) r[row] -= v * xval_[j];
        }
        for (int i = 0; i < m_; ++i) {
            const double* bi = &binv_[static_cast<size_t>(i) * m_];
            double s = 0.0;
            for (int k = 0; k < m_; ++k) s += bi[k] * r[k];
            xval_[basis_[i]] = s;
        }
    }

    // Rebuild binv_ from the current basis columns (Gauss-Jordan with partial
    // pivoting). Returns false if the basis matrix is numerically singular.
    bool refactor() {
        std::vector<double> work(static_cast<size_t>(m_) * 2 * m_, 0.0);
        for (int i = 0; i < m_; ++i) {
            for (const auto& [row, v] : cols_[basis_[i]]) work[static_cast<size_t>(row) * 2 * m_ + i] = v;
            work[static_cast<size_t>(i) * 2 * m_ + m_ + i] = 1.0;
        }
        const int w = 2 * m_;
        for (int col = 0; col < m_; ++col) {
            int piv = col;
            double best = std::abs(work[static_cast<size_t>(col) * w + col]);
            for (int i = col + 1; i < m_; ++i) {
                const double v = std::abs(work[static_cast<size_t>(i) * w + col]);
                if (v > best) { best = v; piv = i; }
            }
            if (best < 1e-11) return false;
            if (piv != col)
                for (int k = 0; k < w; ++k) std::swap(work[static_cast<size_t>(piv) * w + k], work[static_cast<size_t>(col) * w + k]);
            double* pr = &work[static_cast<size_t>(col) * w];
            const double inv = 1.0 / pr[col];
            for (int k = 0; k < w; ++k) pr[k] *= inv;
            for (int i = 0; i < m_; ++i) {
                if (i == col) continue;
                double* ri = &work[static_cast<size_t>(i) * w];
                const double f = ri[col];
                if (f == 0.0) continue;
                for (int k = 0; k < w; ++k) ri[k] -= f * pr[k];
            }
        }
        for (int i = 0; i < m_; ++i)
            for (int k = 0; k < m_; ++k) binv_[static_cast<size_t>(i) * m_ + k] = work[static_cast<size_t>(i) * w + m_ + k];
        pivots_since_refactor_ = 0;
        return true;
    }

    LpSolution run(const LinearProgram& lp) {
        const int max_iter = opt_.max_iterations > 0 ? opt_.max_iterations : 50 * (n_ + m_);
        int iterations = 0;
        Vector y(m_), w(m_);

        for (;;) {
            // phase-1 costs: +-1 on bound-violating basic variables, zero otherwise
            bool phase1 = false;
            Vector cb(m_, 0.0);
            for (int i = 0; i < m_; ++i) {
                const int j = basis_[i];
                if (xval_[j] < lo_[j] - feas_eps(lo_[j])) { cb[i] = -1.0; phase1 = true; }
                else if (xval_[j] > hi_[j] + feas_eps(hi_[j])) { cb[i] = 1.0; phase1 = true; }
            }
            if (!phase1)
                for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_[i]];

            // duals y' = cb' B^-1
            std::fill(y.begin(), y.end(), 0.0);
            for (int i = 0; i < m_; ++i) {
                if (cb[i] == 0.0) continue;
                const double f = cb[i];
                const double* bi = &binv_[static_cast<size_t>(i) * m_];
                for (int k = 0; k < m_; ++k) y[k] += f * bi[k];
            }

            // Bland entering rule: lowest-index candidate with a favourable reduced cost
            int enter = -1, sigma = 0;
            for (int j = 0; j < ntot_ && enter < 0; ++j) {
                if (state_[j] == VarState::basic) continue;
                if (hi_[j] - lo_[j] <= 0.0) continue;  // fixed
                double d = phase1 ? 0.0 : cost_[j];
                for (const auto& [row, v] : cols_[j]) d -= y[row] * v;
                switch (state_[j]) {
                    case VarState::at_lower:
                        if (d < -opt_.tol_cost) { enter = j; sigma = 1; }
                        break;
                    case VarState::at_upper:
                        if (d > opt_.tol_cost) { enter = j; sigma = -1; }
                        break;
                    case VarState::free_zero:
                        if (std::abs(d) > opt_.tol_cost) { enter = j; sigma = d < 0 ? 1 : -1; }
                        break;
                    default: break;
                }
            }
            if (enter < 0) {
                if (phase1) return finish(lp, LpStatus::infeasible, iterations);
                return finish(lp, LpStatus::optimal, iterations);
            }

            // direction through the basis: w = B^-1 a_e
            std::fill(w.begin(), w.end(), 0.0);
            for (const auto& [row, v] : cols_[enter])
                for (int i = 0; i < m_; ++i) w[i] += v * binv_[static_cast<size_t>(i) * m_ + row];

            // ratio test with Bland tie-break on the leaving variable index.
            // During phase 1 a violated basic variable only blocks at the bound it
            // is returning to; its far side is treated as open.
            double t_best = kLpInfinity;
            int leave = -1;
            bool leave_to_upper = false;
            for (int i = 0; i < m_; ++i) {
                if (std::abs(w[i]) < opt_.tol_pivot) continue;
                const int j = basis_[i];
                const double delta = -static_cast<double>(sigma) * w[i];  // d x_Bi / dt
                const bool below = xval_[j] < lo_[j] - feas_eps(lo_[j]);
                const bool above = xval_[j] > hi_[j] + feas_eps(hi_[j]);
                double limit = kLpInfinity;
                bool to_upper = false;
                if (delta > 0) {
                    const double cap = above ? kLpInfinity : hi_[j];
                    if (lp_is_finite(cap)) { limit = (cap - xval_[j]) / delta; to_upper = true; }
                } else {
                    const double cap = below ? -kLpInfinity : lo_[j];
                    if (lp_is_finite(cap)) { limit = (cap - xval_[j]) / delta; to_upper = false; }
                }
                if (limit >= kLpInfinity) continue;
                limit = std::max(limit, 0.0);
                const double tie = 1e-9 * (1.0 + std::min(limit, t_best));
                if (limit < t_best - tie || (limit <= t_best + tie && (leave < 0 || j < basis_[leave]))) {
                    t_best = limit;
                    leave = i;
                    leave_to_upper = to_upper;
                }
            }
            // the entering variable's own opposite bound
            double t_flip = kLpInfinity;
            if (lp_is_finite(lo_[enter]) && lp_is_finite(hi_[enter])) t_flip = hi_[enter] - lo_[enter];

            if (leave < 0 && t_flip >= kLpInfinity) {
                if (phase1) throw std::runtime_error("solve_lp: phase-1 direction unbounded (numerical failure)");
                return finish(lp, LpStatus::unbounded, iterations);
            }

            if (++iterations > max_iter)
                throw std::runtime_error("solve_lp: iteration limit " + std::to_string(max_iter) + " exceeded");

            if (t_flip <= t_best || leave < 0) {
                // bound flip, basis unchanged
                const double t = t_flip;
                for (int i = 0; i < m_; ++i)
                    if (w[i] != 0.0) xval_[basis_[i]] -= sigma * t * w[i];
                xval_[enter] = state_[enter] == VarState::at_lower ? hi_[enter] : lo_[enter];
                state_[enter] = state_[enter] == VarState::at_lower ? VarState::at_upper : VarState::at_lower;
                continue;
            }

            const double t = t_best;
            const int out = basis_[leave];
            for (int i = 0; i < m_; ++i)
                if (w[i] != 0.0) xval_[basis_[i]] -= sigma * t * w[i];
            xval_[enter] = entering_value(enter) + sigma * t;
            xval_[out] = leave_to_upper ? hi_[out] : lo_[out];  // land exactly on the bound
            state_[out] = leave_to_upper ? VarState::at_upper : VarState::at_lower;
            state_[enter] = VarState::basic;
            basis_[leave] = enter;

            // rank-1 update of the explicit inverse
            {
                double* br = &binv_[static_cast<size_t>(leave) * m_];
                const double inv_piv = 1.0 / w[leave];
                for (int k = 0; k < m_; ++k) br[k] *= inv_piv;
                for (int i = 0; i < m_; ++i) {
                    if (i == leave || w[i] == 0.0) continue;
                    double* bi = &binv_[static_cast<size_t>(i) * m_];
                    const double f = w[i];
                    for (int k = 0; k < m_; ++k) bi[k] -= f * br[k];
                }
            }
            if (++pivots_since_refactor_ >= opt_.refactor_interval) {
                if (!refactor()) { cold_basis(); snap_nonbasic(); }
                compute_basic_values();
            }
        }
    }

    double entering_value(int j) const {
        switch (state_[j]) {
            case VarState::at_lower: return lo_[j];
            case VarState::at_upper: return hi_[j];
            default: return 0.0;
        }
    }

    LpSolution finish(const LinearProgram& lp, LpStatus status, int iterations) {
        LpSolution sol;
        sol.status = status;
        sol.iterations = iterations;
        if (status != LpStatus::optimal) return sol;

        // guard against drift: verify the equalities actually hold, refactor once if not
        for (int attempt = 0; attempt < 2; ++attempt) {
            double worst = 0.0;
            Vector act(m_, 0.0);
            for (int j = 0; j < ntot_; ++j) {
                if (xval_[j] == 0.0) continue;
                for (const auto& [row, v] : cols_[j]) act[row] += v * xval_[j];
            }
            for (int r = 0; r < m_; ++r) worst = std::max(worst, std::abs(act[r] - b_[r]) / (1.0 + std::abs(b_[r])));
            for (int j = 0; j < ntot_; ++j) {
                if (lp_is_finite(lo_[j])) worst = std::max(worst, (lo_[j] - xval_[j]) / (1.0 + std::abs(lo_[j])));
                if (lp_is_finite(hi_[j])) worst = std::max(worst, (xval_[j] - hi_[j]) / (1.0 + std::abs(hi_[j])));
            }
            if (worst <= opt_.tol_feas) break;
            if (attempt == 1) throw std::runtime_error("solve_lp: optimal basis failed the feasibility check (residual " + std::to_string(worst) + ")");
            if (!refactor()) { cold_basis(); snap_nonbasic(); }
            compute_basic_values();
        }

        sol.x.assign(xval_.begin(), xval_.begin() + n_);
        double obj = 0.0;
        for (int j = 0; j < n_; ++j) obj += lp.c[j] * sol.x[j];
        sol.objective = obj;
        return sol;
    }
};

/// One-shot solve; stateless facade over a fresh SimplexSolver.
inline LpSolution solve_lp(const LinearProgram& lp, const SolveOptions& opt = {}) {
    SimplexSolver solver(opt);
    return solver.solve(lp);
}

// ---------------------------------------------------------------------------
// Piecewise-linear expansion of quadratic slack penalties
// ---------------------------------------------------------------------------

/// Convex PWL approximation of w*eps^2 over [0, eps_max] with K equal segments,
/// exact at the breakpoints; sandwich error at most w*(eps_max/K)^2/4.
struct PwlQuadratic {
    int segments = 8;
    double eps_max = 5.0;
};

struct QuadraticSlackExpansion {
    LinearProgram lp;
    // per expanded slack: the K column indices whose values sum to eps
    std::vector<std::vector<int>> segment_groups;
};

/// Replace each listed slack variable (lb must be 0) by K ordered segment
/// variables with chord-slope costs weight*(e_j + e_{j-1}). Every row coefficient
/// of the slack is replicated onto the added segments, so any constraint written
/// against eps now sees the segment sum. Original variables keep their indices.
inline QuadraticSlackExpansion expand_quadratic_slack(const LinearProgram& lp, const std::vector<int>& slack_vars,
                                                      const Vector& weights, const PwlQuadratic& cfg) {
    if (cfg.segments < 2) throw std::invalid_argument("expand_quadratic_slack: need at least 2 segments");
    if (!(cfg.eps_max > 0) || !lp_is_finite(cfg.eps_max))
        throw std::invalid_argument("expand_quadratic_slack: eps_max must be finite and positive");
    if (weights.size() != slack_vars.size())
        throw std::invalid_argument("expand_quadratic_slack: one weight per slack variable required");

    QuadraticSlackExpansion out;
    out.lp = lp;
    const double h = cfg.eps_max / cfg.segments;
    for (size_t s = 0; s < slack_vars.size(); ++s) {
        const int v = slack_vars[s];
        const double w = weights[s];
        if (v < 0 || v >= lp.n) throw std::invalid_argument("expand_quadratic_slack: bad slack index");
        if (out.lp.lb[v] != 0.0) throw std::invalid_argument("expand_quadratic_slack: slack lower bound must be 0");

        std::vector<int> group{v};
        out.lp.ub[v] = h;
        out.lp.c[v] += w * h;  // chord slope of the first segment
        for (int k = 2; k <= cfg.segments; ++k) {
            const double slope = w * h * (2 * k - 1);
            group.push_back(out.lp.add_variable(slope, 0.0, h));
        }
        for (auto& row : out.lp.rows) {
            double coef = 0.0;
            for (const auto& [j, val] : row.coeffs)
                if (j == v) coef = val;
            if (coef == 0.0) continue;
            for (size_t k = 1; k < group.size(); ++k) row.coeffs.push_back({group[k], coef});
        }
        out.segment_groups.push_back(std::move(group));
    }
    return out;
}

/// Chord value of the PWL approximation at eps (equals the LP cost the ordered
/// segment fill incurs for that slack level).
inline double pwl_quadratic_cost(double eps, double weight, const PwlQuadratic& cfg) {
    const double h = cfg.eps_max / cfg.segments;
    const double clamped = std::clamp(eps, 0.0, cfg.eps_max);
    const int full = static_cast<int>(clamped / h);
    double cost = 0.0;
    for (int k = 1; k <= full; ++k) cost += weight * h * (2 * k - 1) * h;
    const double rem = clamped - full * h;
    if (rem > 0 && full < cfg.segments) cost += weight * h * (2 * (full + 1) - 1) * rem;
    return cost;
}

inline double pwl_quadratic_gap_bound(double weight, const PwlQuadratic& cfg) {
    const double h = cfg.eps_max / cfg.segments;
    return weight * h * h / 4.0;
}

// ---------------------------------------------------------------------------
// Debug dump (text fixed-point regression format)
// ---------------------------------------------------------------------------

inline std::string dump_lp(const LinearProgram& lp) {
    char buf[128];
    std::string out = "lp n=" + std::to_string(lp.n) + " rows=" + std::to_string(lp.rows.size()) + "\n";
    auto fmt = [&](double v) {
        if (v >= kLpInfinity) return std::string("inf");
        if (v <= -kLpInfinity) return std::string("-inf");
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return std::string(buf);
    };
    for (int j = 0; j < lp.n; ++j)
        out += "var " + std::to_string(j) + " c=" + fmt(lp.c[j]) + " lb=" + fmt(lp.lb[j]) + " ub=" + fmt(lp.ub[j]) + "\n";
    for (size_t r = 0; r < lp.rows.size(); ++r) {
        const auto& row = lp.rows[r];
        out += "row " + std::to_string(r) + (row.sense == RowSense::le ? " <= " : row.sense == RowSense::ge ? " >= " : " == ") + fmt(row.rhs) + " :";
        for (const auto& [j, v] : row.coeffs) out += " " + std::to_string(j) + "*" + fmt(v);
        out += "\n";
    }
    return out;
}

}  // namespace sems
