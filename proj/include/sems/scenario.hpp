#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sems/core.hpp"

namespace sems {

using sjson = nlohmann::ordered_json;

/// A per-step series the harness fills at run time from a playback signal or a
/// generated forecast, scaled.
struct SeriesBinding {
    std::string source;  // "signal" or "forecast"
    std::string name;
    double scale = 1.0;

    bool operator==(const SeriesBinding&) const = default;
};

/// Per-step conversion efficiency computed as a capped Carnot fraction between a
/// source-temperature signal and a fixed design sink temperature.
struct CopBinding {
    std::string source_signal;
    double sink_design = 55.0;
    double carnot_fraction = 0.5;

    bool operator==(const CopBinding&) const = default;
};

struct SupplyBindings {
    std::map<int, CopBinding> cop_eta;        // conversion index -> COP rule
    std::map<int, SeriesBinding> tech_max;    // conversion index -> availability
    bool operator==(const SupplyBindings&) const = default;
};

struct StoreBindings {
    std::optional<SeriesBinding> u_max;       // e.g. deferrable share of a demand forecast
    std::optional<SeriesBinding> v_max;
    bool flush_soc_at_day_end = false;        // pin the level to zero on day boundaries
    bool operator==(const StoreBindings&) const = default;
};

struct DemandBindings {
    std::optional<SeriesBinding> dem;                      // time-series demand source
    std::map<std::string, SeriesBinding> disturbances;     // state-space channel -> source
    std::string output_meas;                               // measurement field carrying the model output
    bool operator==(const DemandBindings&) const = default;
};

struct SubsystemExtras {
    sjson plant;     // digital-twin plant parameters, parsed by the twin module
    sjson forecast;  // forecast-model configuration, parsed by the harness
    std::map<int, SupplyBindings> supplies;
    std::map<int, StoreBindings> stores;
    std::map<int, DemandBindings> demands;
    std::map<std::string, std::map<std::string, SeriesBinding>> alpha;  // factor -> resource
};

struct SignalsConfig {
    std::string file;        // CSV of exogenous signals, relative to the scenario file
    std::string ev_profile;  // optional daily EV base-profile CSV
    std::vector<std::string> holidays;  // ISO dates
};

struct ScenarioDoc {
    int schema_version = 1;
    DistrictSpec district;
    SignalsConfig signals;
    std::vector<SubsystemExtras> extras;  // aligned with district.subsystems
    std::string base_dir;                 // directory the scenario was loaded from
};

namespace scenario_detail {

[[noreturn]] inline void fail(const std::string& ctx, const std::string& msg) {
    throw std::runtime_error("scenario: " + ctx + ": " + msg);
}

inline void expect_keys(const sjson& obj, const std::string& ctx, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(ctx, "expected an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) fail(ctx, "unknown field '" + k + "'");
}

inline double get_number(const sjson& obj, const std::string& ctx, const std::string& key) {
    if (!obj.contains(key)) fail(ctx, "missing field '" + key + "'");
    if (!obj[key].is_number()) fail(ctx + "." + key, "expected a number");
    return obj[key].get<double>();
}

inline double get_number_or(const sjson& obj, const std::string& key, double def) {
    return obj.contains(key) ? obj[key].get<double>() : def;
}

inline std::string get_string(const sjson& obj, const std::string& ctx, const std::string& key) {
    if (!obj.contains(key)) fail(ctx, "missing field '" + key + "'");
    if (!obj[key].is_string()) fail(ctx + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

inline Series parse_series(const sjson& v, int n, const std::string& ctx) {
    if (v.is_number()) return constant_series(v.get<double>(), n);
    if (v.is_array()) {
        Series out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(ctx, "series entries must be numbers");
            out.push_back(e.get<double>());
        }
        if (static_cast<int>(out.size()) != n)
            fail(ctx, "series length " + std::to_string(out.size()) + " != horizon " + std::to_string(n));
        return out;
    }
    fail(ctx, "expected a number or an array");
}

inline bool is_binding(const sjson& v) {
    return v.is_object() && (v.contains("signal") || v.contains("forecast"));
}

inline SeriesBinding parse_binding(const sjson& v, const std::string& ctx) {
    expect_keys(v, ctx, {"signal", "forecast", "scale"});
    SeriesBinding b;
    if (v.contains("signal") == v.contains("forecast")) fail(ctx, "binding needs exactly one of 'signal'/'forecast'");
    b.source = v.contains("signal") ? "signal" : "forecast";
    b.name = v[b.source].get<std::string>();
    b.scale = get_number_or(v, "scale", 1.0);
    return b;
}

inline sjson series_json(const Series& s) {
    bool constant = true;
    for (double v : s) constant = constant && v == s.front();
    if (!s.empty() && constant) return s.front();
    return sjson(s);
}

inline sjson binding_json(const SeriesBinding& b) {
    sjson j;
    j[b.source] = b.name;
    if (b.scale != 1.0) j["scale"] = b.scale;
    return j;
}

inline Matrix parse_matrix(const sjson& v, const std::string& ctx) {
    if (!v.is_array() || v.empty() || !v[0].is_array()) fail(ctx, "expected an array of rows");
    Matrix m(static_cast<int>(v.size()), static_cast<int>(v[0].size()));
    for (int r = 0; r < m.rows; ++r) {
        if (static_cast<int>(v[r].size()) != m.cols) fail(ctx, "ragged matrix rows");
        for (int c = 0; c < m.cols; ++c) m(r, c) = v[r][c].get<double>();
    }
    return m;
}

inline sjson matrix_json(const Matrix& m) {
    sjson rows = sjson::array();
    for (int r = 0; r < m.rows; ++r) {
        sjson row = sjson::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline StateSpaceModel parse_model(const sjson& v, const std::string& ctx) {
    expect_keys(v, ctx, {"A", "B", "E", "C", "dt_minutes", "state_names", "output_names"});
    StateSpaceModel m;
    m.A = parse_matrix(v.contains("A") ? v["A"] : sjson(), ctx + ".A");
    if (v.contains("B"))
        for (const auto& [q, col] : v["B"].items()) {
            m.input_names.push_back(q);
            Vector b;
            for (const auto& e : col) b.push_back(e.get<double>());
            m.B.push_back(std::move(b));
        }
    if (v.contains("E"))
        for (const auto& [ex, col] : v["E"].items()) {
            m.disturbance_names.push_back(ex);
            Vector e;
            for (const auto& x : col) e.push_back(x.get<double>());
            m.E.push_back(std::move(e));
        }
    m.C = parse_matrix(v.contains("C") ? v["C"] : sjson(), ctx + ".C");
    m.dt_minutes = static_cast<int>(get_number_or(v, "dt_minutes", 15));
    for (int i = 0; i < m.A.rows; ++i) m.state_names.push_back("x" + std::to_string(i));
    if (v.contains("state_names")) {
        m.state_names.clear();
        for (const auto& s : v["state_names"]) m.state_names.push_back(s.get<std::string>());
    }
    if (v.contains("output_names"))
        for (const auto& s : v["output_names"]) m.output_names.push_back(s.get<std::string>());
    else
        for (int i = 0; i < m.C.rows; ++i) m.output_names.push_back("y" + std::to_string(i));
    try {
        m.check_dimensions();
    } catch (const std::exception& e) {
        fail(ctx, e.what());
    }
    return m;
}

inline sjson model_json(const StateSpaceModel& m) {
    sjson j;
    j["A"] = matrix_json(m.A);
    if (!m.B.empty()) {
        sjson b;
        for (size_t q = 0; q < m.B.size(); ++q) b[m.input_names[q]] = sjson(m.B[q]);
        j["B"] = b;
    }
    if (!m.E.empty()) {
        sjson e;
        for (size_t ex = 0; ex < m.E.size(); ++ex) e[m.disturbance_names[ex]] = sjson(m.E[ex]);
        j["E"] = e;
    }
    j["C"] = matrix_json(m.C);
    j["dt_minutes"] = m.dt_minutes;
    j["state_names"] = m.state_names;
    j["output_names"] = m.output_names;
    return j;
}

}  // namespace scenario_detail

// ---------------------------------------------------------------------------
// Load
// ---------------------------------------------------------------------------

inline ScenarioDoc load_scenario_json(const sjson& root, const std::string& base_dir) {
    using namespace scenario_detail;
    ScenarioDoc doc;
    doc.base_dir = base_dir;
    expect_keys(root, "scenario", {"schema_version", "grid", "subsystems", "p_lim", "signals"});
    doc.schema_version = static_cast<int>(get_number(root, "scenario", "schema_version"));
    if (doc.schema_version != 1)
        fail("scenario.schema_version", "unsupported version " + std::to_string(doc.schema_version) + " (expected 1)");

    if (!root.contains("grid")) fail("scenario", "missing field 'grid'");
    const auto& g = root["grid"];
    expect_keys(g, "grid", {"start", "dt_minutes", "steps"});
    TimeGrid grid;
    grid.start = parse_iso8601(get_string(g, "grid", "start"));
    grid.dt_minutes = static_cast<int>(get_number(g, "grid", "dt_minutes"));
    grid.steps = static_cast<int>(get_number(g, "grid", "steps"));
    const int n = grid.steps;

    if (!root.contains("subsystems") || !root["subsystems"].is_array())
        fail("scenario", "missing field 'subsystems'");
    int sub_idx = 0;
    for (const auto& sj : root["subsystems"]) {
        const std::string sc = "subsystems[" + std::to_string(sub_idx) + "]";
        expect_keys(sj, sc, {"id", "weights", "supplies", "stores", "demands", "limits", "plant", "forecast"});
        SubsystemSpec sub;
        SubsystemExtras extras;
        sub.id = get_string(sj, sc, "id");
        sub.grid = grid;
        if (sj.contains("weights")) {
            expect_keys(sj["weights"], sc + ".weights", {"nrg", "pen", "slack"});
            sub.phi_nrg = get_number_or(sj["weights"], "nrg", 0.0);
            sub.phi_pen = get_number_or(sj["weights"], "pen", 0.0);
            sub.phi_slack = get_number_or(sj["weights"], "slack", 0.0);
        }

        int sup_idx = 0;
        if (sj.contains("supplies"))
            for (const auto& supj : sj["supplies"]) {
                const std::string spc = sc + ".supplies[" + std::to_string(sup_idx) + "]";
                expect_keys(supj, spc, {"id", "store_connected", "conversions"});
                SupplyTech sup;
                sup.id = get_string(supj, spc, "id");
                sup.store_connected = supj.contains("store_connected") && supj["store_connected"].get<bool>();
                SupplyBindings sb;
                int conv_idx = 0;
                if (!supj.contains("conversions")) fail(spc, "missing field 'conversions'");
                for (const auto& cj : supj["conversions"]) {
                    const std::string cc = spc + ".conversions[" + std::to_string(conv_idx) + "]";
                    expect_keys(cj, cc, {"resource", "carrier", "eta", "tech_min", "tech_max"});
                    Conversion conv;
                    conv.resource = get_string(cj, cc, "resource");
                    conv.carrier = get_string(cj, cc, "carrier");
                    if (!cj.contains("eta")) fail(cc, "missing field 'eta'");
                    if (cj["eta"].is_object()) {
                        expect_keys(cj["eta"], cc + ".eta", {"cop"});
                        const auto& copj = cj["eta"]["cop"];
                        expect_keys(copj, cc + ".eta.cop", {"source_signal", "sink_design", "carnot_fraction"});
                        CopBinding cb;
                        cb.source_signal = get_string(copj, cc + ".eta.cop", "source_signal");
                        cb.sink_design = get_number_or(copj, "sink_design", 55.0);
                        cb.carnot_fraction = get_number_or(copj, "carnot_fraction", 0.5);
                        sb.cop_eta[conv_idx] = cb;
                        conv.eta = constant_series(1.0, n);  // placeholder until the harness applies the COP rule
                    } else {
                        conv.eta = parse_series(cj["eta"], n, cc + ".eta");
                    }
                    conv.tech_min = cj.contains("tech_min") ? parse_series(cj["tech_min"], n, cc + ".tech_min")
                                                            : constant_series(0.0, n);
                    if (!cj.contains("tech_max")) fail(cc, "missing field 'tech_max'");
                    if (is_binding(cj["tech_max"])) {
                        sb.tech_max[conv_idx] = parse_binding(cj["tech_max"], cc + ".tech_max");
                        conv.tech_max = constant_series(0.0, n);
                    } else {
                        conv.tech_max = parse_series(cj["tech_max"], n, cc + ".tech_max");
                    }
                    sup.conversions.push_back(std::move(conv));
                    ++conv_idx;
                }
                if (!sb.cop_eta.empty() || !sb.tech_max.empty()) extras.supplies[sup_idx] = std::move(sb);
                sub.supplies.push_back(std::move(sup));
                ++sup_idx;
            }

        int sto_idx = 0;
        if (sj.contains("stores"))
            for (const auto& stj : sj["stores"]) {
                const std::string stc = sc + ".stores[" + std::to_string(sto_idx) + "]";
                expect_keys(stj, stc,
                            {"id", "carrier", "eta_stl", "eta_stv", "eta_stu", "soc_init", "soc_min", "soc_max",
                             "u_min", "u_max", "v_min", "v_max", "beta", "terminal_soc_geq_init",
                             "flush_soc_at_day_end"});
                StorageTech sto;
                sto.id = get_string(stj, stc, "id");
                sto.carrier = get_string(stj, stc, "carrier");
                sto.eta_stl = get_number_or(stj, "eta_stl", 1.0);
                sto.eta_stv = get_number_or(stj, "eta_stv", 1.0);
                sto.eta_stu = get_number_or(stj, "eta_stu", 1.0);
                sto.soc_init = get_number(stj, stc, "soc_init");
                auto series_field = [&](const char* key, double def) {
                    return stj.contains(key) ? parse_series(stj[key], n, stc + "." + key) : constant_series(def, n);
                };
                sto.soc_min = series_field("soc_min", 0.0);
                if (!stj.contains("soc_max")) fail(stc, "missing field 'soc_max'");
                sto.soc_max = parse_series(stj["soc_max"], n, stc + ".soc_max");
                sto.u_min = series_field("u_min", 0.0);
                StoreBindings stb;
                if (stj.contains("u_max") && is_binding(stj["u_max"])) {
                    stb.u_max = parse_binding(stj["u_max"], stc + ".u_max");
                    sto.u_max = constant_series(0.0, n);
                } else {
                    sto.u_max = series_field("u_max", 0.0);
                }
                sto.v_min = series_field("v_min", 0.0);
                if (stj.contains("v_max") && is_binding(stj["v_max"])) {
                    stb.v_max = parse_binding(stj["v_max"], stc + ".v_max");
                    sto.v_max = constant_series(0.0, n);
                } else {
                    sto.v_max = series_field("v_max", 0.0);
                }
                sto.beta = series_field("beta", 0.0);
                sto.terminal_soc_geq_init = stj.contains("terminal_soc_geq_init") && stj["terminal_soc_geq_init"].get<bool>();
                stb.flush_soc_at_day_end = stj.contains("flush_soc_at_day_end") && stj["flush_soc_at_day_end"].get<bool>();
                if (stb.v_max || stb.flush_soc_at_day_end) extras.stores[sto_idx] = std::move(stb);
                sub.stores.push_back(std::move(sto));
                ++sto_idx;
            }

        int dem_idx = 0;
        if (sj.contains("demands"))
            for (const auto& dj : sj["demands"]) {
                const std::string dc = sc + ".demands[" + std::to_string(dem_idx) + "]";
                const std::string type = get_string(dj, dc, "type");
                DemandBindings db;
                if (type == "time_series") {
                    expect_keys(dj, dc, {"type", "id", "carrier", "dem"});
                    TimeSeriesDemand ts;
                    ts.id = get_string(dj, dc, "id");
                    ts.carrier = get_string(dj, dc, "carrier");
                    if (!dj.contains("dem")) fail(dc, "missing field 'dem'");
                    if (is_binding(dj["dem"])) {
                        db.dem = parse_binding(dj["dem"], dc + ".dem");
                        ts.dem = constant_series(0.0, n);
                    } else {
                        ts.dem = parse_series(dj["dem"], n, dc + ".dem");
                    }
                    sub.demands.push_back(std::move(ts));
                } else if (type == "state_space") {
                    expect_keys(dj, dc,
                                {"type", "id", "model", "x_init", "sp_up", "sp_lo", "band", "gamma", "disturbances",
                                 "output_meas"});
                    StateSpaceDemand ss;
                    ss.id = get_string(dj, dc, "id");
                    if (!dj.contains("model")) fail(dc, "missing field 'model'");
                    ss.model = parse_model(dj["model"], dc + ".model");
                    if (dj.contains("x_init"))
                        for (const auto& x : dj["x_init"]) ss.x_init.push_back(x.get<double>());
                    const int r = ss.model.n_outputs();
                    auto band_list = [&](const char* key, double def) {
                        std::vector<Series> out;
                        if (dj.contains(key)) {
                            if (!dj[key].is_array()) fail(dc + "." + key, "expected one entry per model output");
                            for (const auto& e : dj[key]) out.push_back(parse_series(e, n, dc + "." + key));
                        }
                        while (static_cast<int>(out.size()) < r) out.push_back(constant_series(def, n));
                        return out;
                    };
                    ss.sp_up = band_list("sp_up", 1e9);
                    ss.sp_lo = band_list("sp_lo", -1e9);
                    if (dj.contains("band"))
                        for (const auto& b : dj["band"]) {
                            const std::string s = b.get<std::string>();
                            if (s == "both") ss.band.push_back(BandSide::both);
                            else if (s == "upper_only") ss.band.push_back(BandSide::upper_only);
                            else if (s == "lower_only") ss.band.push_back(BandSide::lower_only);
                            else fail(dc + ".band", "unknown band side '" + s + "'");
                        }
                    while (static_cast<int>(ss.band.size()) < r) ss.band.push_back(BandSide::both);
                    ss.gamma = get_number_or(dj, "gamma", 0.0);
                    if (dj.contains("disturbances"))
                        for (const auto& [ch, bj] : dj["disturbances"].items())
                            db.disturbances[ch] = parse_binding(bj, dc + ".disturbances." + ch);
                    if (dj.contains("output_meas")) db.output_meas = dj["output_meas"].get<std::string>();
                    sub.demands.push_back(std::move(ss));
                } else {
                    fail(dc + ".type", "unknown demand type '" + type + "'");
                }
                if (db.dem || !db.disturbances.empty() || !db.output_meas.empty())
                    extras.demands[dem_idx] = std::move(db);
                ++dem_idx;
            }

        if (sj.contains("limits")) {
            const auto& lj = sj["limits"];
            expect_keys(lj, sc + ".limits", {"p_min", "p_max", "alpha"});
            if (lj.contains("p_min"))
                for (const auto& [p, v] : lj["p_min"].items())
                    sub.limits.p_min[p] = parse_series(v, n, sc + ".limits.p_min." + p);
            if (lj.contains("p_max"))
                for (const auto& [p, v] : lj["p_max"].items())
                    sub.limits.p_max[p] = parse_series(v, n, sc + ".limits.p_max." + p);
            if (lj.contains("alpha"))
                for (const auto& [w, pj] : lj["alpha"].items())
                    for (const auto& [p, v] : pj.items()) {
                        const std::string ac = sc + ".limits.alpha." + w + "." + p;
                        if (is_binding(v)) {
                            extras.alpha[w][p] = parse_binding(v, ac);
                            sub.limits.alpha[w][p] = constant_series(0.0, n);
                        } else {
                            sub.limits.alpha[w][p] = parse_series(v, n, ac);
                        }
                    }
        }

        if (sj.contains("plant")) extras.plant = sj["plant"];
        if (sj.contains("forecast")) extras.forecast = sj["forecast"];
        doc.district.subsystems.push_back(std::move(sub));
        doc.extras.push_back(std::move(extras));
        ++sub_idx;
    }

    if (root.contains("p_lim"))
        for (const auto& [p, v] : root["p_lim"].items())
            doc.district.p_lim[p] = parse_series(v, n, "p_lim." + p);

    if (root.contains("signals")) {
        const auto& sg = root["signals"];
        expect_keys(sg, "signals", {"file", "ev_profile", "holidays"});
        if (sg.contains("file")) doc.signals.file = sg["file"].get<std::string>();
        if (sg.contains("ev_profile")) doc.signals.ev_profile = sg["ev_profile"].get<std::string>();
        if (sg.contains("holidays"))
            for (const auto& h : sg["holidays"]) doc.signals.holidays.push_back(h.get<std::string>());
    }

    auto violations = validate_district(doc.district);
    if (!violations.empty()) {
        std::string msg = "scenario failed validation:";
        for (const auto& v : violations) msg += "\n  - " + to_string(v);
        throw std::runtime_error(msg);
    }
    return doc;
}

inline ScenarioDoc load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario: cannot open '" + path + "'");
    sjson root;
    try {
        root = sjson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("scenario: parse error in '" + path + "': " + e.what());
    }
    return load_scenario_json(root, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Save
// ---------------------------------------------------------------------------

inline sjson scenario_json(const ScenarioDoc& doc) {
    using namespace scenario_detail;
    sjson root;
    root["schema_version"] = doc.schema_version;
    const auto& district = doc.district;
    if (district.subsystems.empty()) throw std::runtime_error("scenario: cannot save an empty district");
    const auto& grid = district.subsystems.front().grid;
    root["grid"] = {{"start", format_iso8601(grid.start)}, {"dt_minutes", grid.dt_minutes}, {"steps", grid.steps}};

    sjson subs = sjson::array();
    for (size_t l = 0; l < district.subsystems.size(); ++l) {
        const auto& sub = district.subsystems[l];
        const SubsystemExtras extras = l < doc.extras.size() ? doc.extras[l] : SubsystemExtras{};
        sjson sj;
        sj["id"] = sub.id;
        sj["weights"] = {{"nrg", sub.phi_nrg}, {"pen", sub.phi_pen}, {"slack", sub.phi_slack}};

        sjson sups = sjson::array();
        for (size_t s = 0; s < sub.supplies.size(); ++s) {
            const auto& sup = sub.supplies[s];
            sjson supj;
            supj["id"] = sup.id;
            supj["store_connected"] = sup.store_connected;
            sjson convs = sjson::array();
            const auto sb = extras.supplies.count(static_cast<int>(s)) ? extras.supplies.at(static_cast<int>(s))
                                                                       : SupplyBindings{};
            for (size_t c = 0; c < sup.conversions.size(); ++c) {
                const auto& conv = sup.conversions[c];
                sjson cj;
                cj["resource"] = conv.resource;
                cj["carrier"] = conv.carrier;
                if (sb.cop_eta.count(static_cast<int>(c))) {
                    const auto& cb = sb.cop_eta.at(static_cast<int>(c));
                    cj["eta"] = {{"cop", {{"source_signal", cb.source_signal},
                                          {"sink_design", cb.sink_design},
                                          {"carnot_fraction", cb.carnot_fraction}}}};
                } else {
                    cj["eta"] = series_json(conv.eta);
                }
                cj["tech_min"] = series_json(conv.tech_min);
                cj["tech_max"] = sb.tech_max.count(static_cast<int>(c))
                                     ? binding_json(sb.tech_max.at(static_cast<int>(c)))
                                     : series_json(conv.tech_max);
                convs.push_back(cj);
            }
            supj["conversions"] = convs;
            sups.push_back(supj);
        }
        sj["supplies"] = sups;

        sjson stos = sjson::array();
        for (size_t st = 0; st < sub.stores.size(); ++st) {
            const auto& sto = sub.stores[st];
            const auto stb = extras.stores.count(static_cast<int>(st)) ? extras.stores.at(static_cast<int>(st))
                                                                       : StoreBindings{};
            sjson stj;
            stj["id"] = sto.id;
            stj["carrier"] = sto.carrier;
            stj["eta_stl"] = sto.eta_stl;
            stj["eta_stv"] = sto.eta_stv;
            stj["eta_stu"] = sto.eta_stu;
            stj["soc_init"] = sto.soc_init;
            stj["soc_min"] = series_json(sto.soc_min);
            stj["soc_max"] = series_json(sto.soc_max);
            stj["u_min"] = series_json(sto.u_min);
            stj["u_max"] = stb.u_max ? binding_json(*stb.u_max) : series_json(sto.u_max);
            stj["v_min"] = series_json(sto.v_min);
            stj["v_max"] = stb.v_max ? binding_json(*stb.v_max) : series_json(sto.v_max);
            stj["beta"] = series_json(sto.beta);
            if (sto.terminal_soc_geq_init) stj["terminal_soc_geq_init"] = true;
            if (stb.flush_soc_at_day_end) stj["flush_soc_at_day_end"] = true;
            stos.push_back(stj);
        }
        sj["stores"] = stos;

        sjson dems = sjson::array();
        for (size_t d = 0; d < sub.demands.size(); ++d) {
            const auto db = extras.demands.count(static_cast<int>(d)) ? extras.demands.at(static_cast<int>(d))
                                                                      : DemandBindings{};
            sjson dj;
            if (const auto* ts = std::get_if<TimeSeriesDemand>(&sub.demands[d])) {
                dj["type"] = "time_series";
                dj["id"] = ts->id;
                dj["carrier"] = ts->carrier;
                dj["dem"] = db.dem ? binding_json(*db.dem) : series_json(ts->dem);
            } else {
                const auto& ss = std::get<StateSpaceDemand>(sub.demands[d]);
                dj["type"] = "state_space";
                dj["id"] = ss.id;
                dj["model"] = model_json(ss.model);
                dj["x_init"] = sjson(ss.x_init);
                sjson up = sjson::array(), lo = sjson::array(), band = sjson::array();
                for (const auto& s : ss.sp_up) up.push_back(series_json(s));
                for (const auto& s : ss.sp_lo) lo.push_back(series_json(s));
                for (auto b : ss.band)
                    band.push_back(b == BandSide::both ? "both" : b == BandSide::upper_only ? "upper_only" : "lower_only");
                dj["sp_up"] = up;
                dj["sp_lo"] = lo;
                dj["band"] = band;
                dj["gamma"] = ss.gamma;
                if (!db.disturbances.empty()) {
                    sjson dist;
                    for (const auto& [ch, b] : db.disturbances) dist[ch] = binding_json(b);
                    dj["disturbances"] = dist;
                }
                if (!db.output_meas.empty()) dj["output_meas"] = db.output_meas;
            }
            dems.push_back(dj);
        }
        sj["demands"] = dems;

        sjson lim;
        if (!sub.limits.p_min.empty()) {
            sjson pj;
            for (const auto& [p, v] : sub.limits.p_min) pj[p] = series_json(v);
            lim["p_min"] = pj;
        }
        if (!sub.limits.p_max.empty()) {
            sjson pj;
            for (const auto& [p, v] : sub.limits.p_max) pj[p] = series_json(v);
            lim["p_max"] = pj;
        }
        if (!sub.limits.alpha.empty()) {
            sjson aj;
            for (const auto& [w, per_p] : sub.limits.alpha) {
                sjson pj;
                for (const auto& [p, v] : per_p) {
                    const bool bound = extras.alpha.count(w) && extras.alpha.at(w).count(p);
                    pj[p] = bound ? binding_json(extras.alpha.at(w).at(p)) : series_json(v);
                }
                aj[w] = pj;
            }
            lim["alpha"] = aj;
        }
        sj["limits"] = lim;
        if (!extras.plant.is_null()) sj["plant"] = extras.plant;
        if (!extras.forecast.is_null()) sj["forecast"] = extras.forecast;
        subs.push_back(sj);
    }
    root["subsystems"] = subs;

    sjson plim;
    for (const auto& [p, v] : district.p_lim) plim[p] = scenario_detail::series_json(v);
    root["p_lim"] = plim;

    sjson sig;
    sig["file"] = doc.signals.file;
    if (!doc.signals.ev_profile.empty()) sig["ev_profile"] = doc.signals.ev_profile;
    if (!doc.signals.holidays.empty()) sig["holidays"] = doc.signals.holidays;
    root["signals"] = sig;
    return root;
}

/// Serialise deterministically: two saves of the same document are byte-identical.
inline void save_scenario(const ScenarioDoc& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("scenario: cannot write '" + path + "'");
    out << scenario_json(doc).dump(2) << "\n";
}

}  // namespace sems
