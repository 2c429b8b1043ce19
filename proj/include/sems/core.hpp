#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sems/linalg.hpp"
#include "sems/ssm.hpp"

namespace sems {

/// One value per sample step. Powers are kW, energies kWh, temperatures degC,
/// money GBP, emissions kg CO2; the grid's dt converts between kW and kWh.
using Series = std::vector<double>;

// ---------------------------------------------------------------------------
// UTC timestamps (seconds since epoch) and ISO-8601 helpers
// ---------------------------------------------------------------------------

using Timestamp = std::int64_t;

struct CivilTime {
    int year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0;
};

namespace timeutil {

// Howard Hinnant's days-from-civil algorithm; avoids timegm portability issues.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilTime civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    CivilTime c;
    c.year = static_cast<int>(y + (m <= 2));
    c.month = static_cast<int>(m);
    c.day = static_cast<int>(d);
    return c;
}

}  // namespace timeutil

inline Timestamp from_civil(const CivilTime& c) {
    return timeutil::days_from_civil(c.year, c.month, c.day) * 86400 + c.hour * 3600 + c.minute * 60 + c.second;
}

inline CivilTime to_civil(Timestamp t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CivilTime c = timeutil::civil_from_days(days);
    c.hour = static_cast<int>(rem / 3600);
    c.minute = static_cast<int>((rem % 3600) / 60);
    c.second = static_cast<int>(rem % 60);
    return c;
}

/// Parse "YYYY-MM-DDTHH:MM:SSZ" (seconds optional, trailing Z required).
inline Timestamp parse_iso8601(const std::string& s) {
    CivilTime c;
    int n = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%dZ%n", &c.year, &c.month, &c.day, &c.hour, &c.minute, &c.second, &n) == 6 &&
        n == static_cast<int>(s.size()))
        return from_civil(c);
    c.second = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%dZ%n", &c.year, &c.month, &c.day, &c.hour, &c.minute, &n) == 5 &&
        n == static_cast<int>(s.size()))
        return from_civil(c);
    c = CivilTime{};
    if (std::sscanf(s.c_str(), "%d-%d-%d%n", &c.year, &c.month, &c.day, &n) == 3 && n == static_cast<int>(s.size()))
        return from_civil(c);
    throw std::invalid_argument("not an ISO-8601 UTC timestamp: '" + s + "'");
}

inline std::string format_iso8601(Timestamp t) {
    const CivilTime c = to_civil(t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month, c.day, c.hour, c.minute, c.second);
    return buf;
}

/// 1-based day of year, for solar geometry.
inline int day_of_year(Timestamp t) {
    const CivilTime c = to_civil(t);
    return static_cast<int>(timeutil::days_from_civil(c.year, c.month, c.day) -
                            timeutil::days_from_civil(c.year, 1, 1)) + 1;
}

// ---------------------------------------------------------------------------
// Domain model
// ---------------------------------------------------------------------------

/// Prediction/sampling grid: N samples of dt minutes starting at a UTC instant.
struct TimeGrid {
    Timestamp start = 0;
    int dt_minutes = 15;
    int steps = 96;

    double dt_hours() const { return dt_minutes / 60.0; }
    Timestamp time_at(int i) const { return start + static_cast<Timestamp>(i) * dt_minutes * 60; }
    int steps_per_day() const { return 24 * 60 / dt_minutes; }
};

/// One (resource p -> energy type q) route through a supply technology, with its
/// per-step efficiency and resource-draw bounds (all series length N).
struct Conversion {
    std::string resource;
    std::string carrier;
    Series eta;       // dimensionless; COP-capable techs may exceed 1
    Series tech_min;  // kW of resource draw
    Series tech_max;  // kW of resource draw
};

struct SupplyTech {
    std::string id;
    std::vector<Conversion> conversions;
    bool store_connected = false;
};

/// Storage of a single energy carrier. Bound series allow per-step limits
/// (the EV-delay store needs both a request-tracking charge cap and an
/// end-of-day zero on soc_max); scalars in the scenario file broadcast.
struct StorageTech {
    std::string id;
    std::string carrier;
    double eta_stl = 1.0;  // standing (per-step) retention
    double eta_stv = 1.0;  // charge efficiency
    double eta_stu = 1.0;  // discharge efficiency
    double soc_init = 0.0;             // kWh
    Series soc_min, soc_max;           // kWh
    Series u_min, u_max;               // discharge kW
    Series v_min, v_max;               // charge kW
    Series beta;                       // use-penalty weight in [0,1]
    bool terminal_soc_geq_init = false;
};

enum class BandSide { both, upper_only, lower_only };

/// Demand shaped by the controller through a state-space model with a
/// soft output band.
struct StateSpaceDemand {
    std::string id;
    StateSpaceModel model;
    Vector x_init;
    std::vector<Series> sp_up;           // per output, length N
    std::vector<Series> sp_lo;
    std::vector<BandSide> band;          // which band edges are penalised, per output
    double gamma = 0.0;                  // slack weight in [0,1]
};

/// Demand the controller cannot influence: a fixed kW draw of one carrier.
struct TimeSeriesDemand {
    std::string id;
    std::string carrier;
    Series dem;  // kW, length N
};

using DemandSpec = std::variant<StateSpaceDemand, TimeSeriesDemand>;

/// Per-resource consumption window and the objective weights attached to each
/// weighting factor (e.g. "cost", "co2"), all series length N.
struct ResourceLimits {
    std::map<std::string, Series> p_min;                         // kW
    std::map<std::string, Series> p_max;                         // kW
    std::map<std::string, std::map<std::string, Series>> alpha;  // factor w -> resource p -> [0,1]
};

struct SubsystemSpec {
    std::string id;
    TimeGrid grid;
    std::vector<SupplyTech> supplies;
    std::vector<StorageTech> stores;
    std::vector<DemandSpec> demands;
    ResourceLimits limits;
    double phi_nrg = 1.0, phi_pen = 0.0, phi_slack = 0.0;
};

/// Subsystems in coordination priority order: index 0 is the one most open to
/// resource restriction, the last the least.
struct DistrictSpec {
    std::vector<SubsystemSpec> subsystems;
    std::map<std::string, Series> p_lim;  // kW per shared resource
};

enum class PlanStatus { optimal, infeasible, unbounded, error };

inline const char* to_string(PlanStatus s) {
    switch (s) {
        case PlanStatus::optimal: return "optimal";
        case PlanStatus::infeasible: return "infeasible";
        case PlanStatus::unbounded: return "unbounded";
        default: return "error";
    }
}

/// Solved per-step trajectories for one subsystem. Indexing mirrors the spec
/// lists: v_sup[s][conv] aligns with SubsystemSpec.supplies[s].conversions,
/// u_sup[s] is keyed by carrier, x/y/eps rows follow the model's state/output
/// order with one column per step.
struct OptimalPlan {
    PlanStatus status = PlanStatus::error;
    std::vector<std::vector<Series>> v_sup;            // [s][conv][i] resource kW
    std::vector<std::map<std::string, Series>> u_sup;  // [s][carrier][i] generated kW
    std::vector<Series> v_sto, u_sto, soc;             // [st][i]
    std::vector<Matrix> x, y, eps;                     // [m]
    std::map<std::string, Series> psub;                // [p][i] subsystem resource draw
    double objective = 0.0;
    double j_nrg = 0.0, j_pen = 0.0, j_slack = 0.0;
    int iterations = 0;
    std::string diagnostic;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    std::string field;
    std::string rule;
};

inline std::string to_string(const Violation& v) { return v.field + ": " + v.rule; }

struct ValidateOptions {
    double eta_cap = 10.0;       // COP-capable techs may exceed 1, never this
    double phi_tol = 1e-9;
};

namespace detail {

inline void check_series(std::vector<Violation>& out, const std::string& field, const Series& s, int n) {
    if (static_cast<int>(s.size()) != n)
        out.push_back({field, "length " + std::to_string(s.size()) + " != horizon " + std::to_string(n)});
}

}  // namespace detail

/// Check every type invariant; returns an empty list iff the spec is well formed.
inline std::vector<Violation> validate_spec(const SubsystemSpec& spec, const ValidateOptions& opt = {}) {
    std::vector<Violation> out;
    const std::string base = "subsystem '" + spec.id + "'";
    if (spec.grid.dt_minutes <= 0) out.push_back({base + ".grid.dt_minutes", "must be > 0"});
    if (spec.grid.steps < 1) out.push_back({base + ".grid.steps", "must be >= 1"});
    const int n = spec.grid.steps;

    const double phi_sum = spec.phi_nrg + spec.phi_pen + spec.phi_slack;
    if (std::abs(phi_sum - 1.0) > opt.phi_tol)
        out.push_back({base + ".phi", "phi_nrg + phi_pen + phi_slack = " + std::to_string(phi_sum) + ", must equal 1"});

    for (size_t s = 0; s < spec.supplies.size(); ++s) {
        const auto& sup = spec.supplies[s];
        const std::string sb = base + ".supplies['" + sup.id + "']";
        if (sup.conversions.empty()) out.push_back({sb, "supply defines no conversion route"});
        for (size_t c = 0; c < sup.conversions.size(); ++c) {
            const auto& cv = sup.conversions[c];
            const std::string cb = sb + "[" + cv.resource + "->" + cv.carrier + "]";
            detail::check_series(out, cb + ".eta", cv.eta, n);
            detail::check_series(out, cb + ".tech_min", cv.tech_min, n);
            detail::check_series(out, cb + ".tech_max", cv.tech_max, n);
            for (size_t i = 0; i < cv.eta.size(); ++i) {
                if (cv.eta[i] < 0 || cv.eta[i] > opt.eta_cap) {
                    out.push_back({cb + ".eta", "value " + std::to_string(cv.eta[i]) + " outside [0, " +
                                                    std::to_string(opt.eta_cap) + "] at step " + std::to_string(i)});
                    break;
                }
            }
            for (size_t i = 0; i < cv.tech_min.size() && i < cv.tech_max.size(); ++i) {
                if (cv.tech_min[i] > cv.tech_max[i]) {
                    out.push_back({cb, "tech_min > tech_max at step " + std::to_string(i)});
                    break;
                }
            }
        }
    }

    for (size_t st = 0; st < spec.stores.size(); ++st) {
        const auto& sto = spec.stores[st];
        const std::string sb = base + ".stores['" + sto.id + "']";
        if (sto.carrier.empty()) out.push_back({sb + ".carrier", "must name an energy type"});
        if (!(sto.eta_stl > 0 && sto.eta_stl <= 1)) out.push_back({sb + ".eta_stl", "must be in (0, 1]"});
        if (!(sto.eta_stv > 0 && sto.eta_stv <= 1)) out.push_back({sb + ".eta_stv", "must be in (0, 1]"});
        if (!(sto.eta_stu > 0 && sto.eta_stu <= 1)) out.push_back({sb + ".eta_stu", "must be in (0, 1]"});
        detail::check_series(out, sb + ".soc_min", sto.soc_min, n);
        detail::check_series(out, sb + ".soc_max", sto.soc_max, n);
        detail::check_series(out, sb + ".u_min", sto.u_min, n);
        detail::check_series(out, sb + ".u_max", sto.u_max, n);
        detail::check_series(out, sb + ".v_min", sto.v_min, n);
        detail::check_series(out, sb + ".v_max", sto.v_max, n);
        detail::check_series(out, sb + ".beta", sto.beta, n);
        for (size_t i = 0; i < sto.soc_min.size() && i < sto.soc_max.size(); ++i) {
            if (sto.soc_min[i] > sto.soc_max[i]) {
                out.push_back({sb, "soc_min > soc_max at step " + std::to_string(i)});
                break;
            }
        }
        if (!sto.soc_min.empty() && !sto.soc_max.empty() &&
            (sto.soc_init < sto.soc_min.front() || sto.soc_init > sto.soc_max.front()))
            out.push_back({sb + ".soc_init", "value " + std::to_string(sto.soc_init) +
                                                 " outside [soc_min, soc_max] at step 0"});
        auto ordered = [&](const Series& lo, const Series& hi, const char* what) {
            for (size_t i = 0; i < lo.size() && i < hi.size(); ++i)
                if (lo[i] > hi[i]) {
                    out.push_back({sb, std::string(what) + " lower bound > upper bound at step " + std::to_string(i)});
                    return;
                }
        };
        ordered(sto.u_min, sto.u_max, "discharge");
        ordered(sto.v_min, sto.v_max, "charge");
        for (double b : sto.beta)
            if (b < 0 || b > 1) {
                out.push_back({sb + ".beta", "weight outside [0, 1]"});
                break;
            }
    }

    for (size_t mIdx = 0; mIdx < spec.demands.size(); ++mIdx) {
        const std::string db = base + ".demands[" + std::to_string(mIdx) + "]";
        if (const auto* ss = std::get_if<StateSpaceDemand>(&spec.demands[mIdx])) {
            try {
                ss->model.check_dimensions();
            } catch (const std::exception& e) {
                out.push_back({db + ".model", e.what()});
            }
            if (static_cast<int>(ss->x_init.size()) != ss->model.order())
                out.push_back({db + ".x_init", "size != model order"});
            const int r = ss->model.n_outputs();
            if (static_cast<int>(ss->sp_up.size()) != r || static_cast<int>(ss->sp_lo.size()) != r ||
                static_cast<int>(ss->band.size()) != r)
                out.push_back({db, "set-point bands must have one entry per model output"});
            for (size_t rr = 0; rr < ss->sp_up.size() && rr < ss->sp_lo.size(); ++rr) {
                detail::check_series(out, db + ".sp_up", ss->sp_up[rr], n);
                detail::check_series(out, db + ".sp_lo", ss->sp_lo[rr], n);
                for (size_t i = 0; i < ss->sp_up[rr].size() && i < ss->sp_lo[rr].size(); ++i)
                    if (ss->sp_lo[rr][i] > ss->sp_up[rr][i]) {
                        out.push_back({db, "sp_lo > sp_up at step " + std::to_string(i)});
                        break;
                    }
            }
            if (ss->gamma < 0 || ss->gamma > 1) out.push_back({db + ".gamma", "weight outside [0, 1]"});
        } else {
            const auto& ts = std::get<TimeSeriesDemand>(spec.demands[mIdx]);
            detail::check_series(out, db + ".dem", ts.dem, n);
            for (double v : ts.dem)
                if (v < 0) {
                    out.push_back({db + ".dem", "time-series demand must be >= 0"});
                    break;
                }
        }
    }

    for (const auto& [p, lo] : spec.limits.p_min) {
        detail::check_series(out, base + ".limits.p_min['" + p + "']", lo, n);
        auto hi = spec.limits.p_max.find(p);
        if (hi == spec.limits.p_max.end()) {
            out.push_back({base + ".limits.p_max['" + p + "']", "p_min given without p_max"});
            continue;
        }
        for (size_t i = 0; i < lo.size() && i < hi->second.size(); ++i)
            if (lo[i] > hi->second[i]) {
                out.push_back({base + ".limits['" + p + "']", "p_min > p_max at step " + std::to_string(i)});
                break;
            }
    }
    for (const auto& [p, hi] : spec.limits.p_max)
        detail::check_series(out, base + ".limits.p_max['" + p + "']", hi, n);
    for (const auto& [w, per_p] : spec.limits.alpha)
        for (const auto& [p, av] : per_p) {
            detail::check_series(out, base + ".limits.alpha['" + w + "']['" + p + "']", av, n);
            for (double v : av)
                if (v < 0 || v > 1) {
                    out.push_back({base + ".limits.alpha['" + w + "']['" + p + "']", "weight outside [0, 1]"});
                    break;
                }
        }
    return out;
}

inline std::vector<Violation> validate_district(const DistrictSpec& district, const ValidateOptions& opt = {}) {
    std::vector<Violation> out;
    if (district.subsystems.empty()) out.push_back({"district.subsystems", "at least one subsystem required"});
    for (const auto& sub : district.subsystems) {
        auto v = validate_spec(sub, opt);
        out.insert(out.end(), v.begin(), v.end());
    }
    if (!district.subsystems.empty()) {
        const int n = district.subsystems.front().grid.steps;
        for (size_t l = 1; l < district.subsystems.size(); ++l) {
            const auto& g = district.subsystems[l].grid;
            const auto& g0 = district.subsystems.front().grid;
            if (g.steps != g0.steps || g.dt_minutes != g0.dt_minutes || g.start != g0.start)
                out.push_back({"district.subsystems[" + std::to_string(l) + "].grid",
                               "all subsystems must share one time grid"});
        }
        for (const auto& [p, lim] : district.p_lim)
            detail::check_series(out, "district.p_lim['" + p + "']", lim, n);
    }
    return out;
}

/// Broadcast a scalar to a horizon-length series.
inline Series constant_series(double v, int n) { return Series(static_cast<size_t>(n), v); }

}  // namespace sems
