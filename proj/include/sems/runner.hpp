#pragma once

#include "sems/harness.hpp"

namespace sems {

struct RunResult {
    MetricsReport metrics;
    CoordStatus worst_status = CoordStatus::clean;
    int samples = 0;
    std::string out_dir;
    // realised per-sample district rows for downstream checks
    struct DistrictRow {
        Timestamp t;
        std::map<std::string, double> draw;      // per resource, all subsystems
        std::map<std::string, double> limit;     // per limited resource
        double violation_kw = 0.0;
        double price_elec = 0.0, price_gas = 0.0, co2_elec = 0.0, co2_gas = 0.0;
    };
    std::vector<DistrictRow> district;
    // twin traces per subsystem (index aligned with the scenario)
    std::vector<std::vector<HeatMeasurements>> heat_traces;
    std::vector<std::vector<EvMeasurements>> ev_traces;
    std::vector<HeatPlantConfig> heat_configs;
    // realised vs first-step forecast per channel
    std::map<std::string, Series> forecast_used, realised;
};

namespace runner_detail {

inline std::string resolve(const std::string& base_dir, const std::string& rel) {
    if (rel.empty() || rel.front() == '/') return rel;
    return base_dir.empty() ? rel : base_dir + "/" + rel;
}

/// Baseline pre-MPC control for the warm-up window: boilers hold the network
/// near its initial temperature, EVs charge on request.
inline std::map<std::string, double> baseline_setpoints(const DigitalTwin& twin, Timestamp t,
                                                        const ExogenousSignals& signals, int dt_minutes) {
    std::map<std::string, double> sp;
    for (size_t l = 0; l < twin.size(); ++l) {
        if (twin.kind(l) != PlantKind::heat_network) continue;
        const auto& plant = twin.heat_plant(l);
        const auto& cfg = plant.config();
        const double t_amb = signals.at("t_amb", t);
        const double hold = cfg.ua_net * (plant.t_net() - t_amb) +
                            0.5 * (cfg.t_net_init - plant.t_net()) * cfg.c_net / (dt_minutes / 60.0);
        sp[twin.id(l) + ".q_boiler"] = std::clamp(plant.demand_request(t) + hold, 0.0, cfg.boiler_cap);
    }
    return sp;
}

inline void append_history_from_twin(ForecastService& svc, const DigitalTwin& twin) {
    for (size_t l = 0; l < twin.size(); ++l) {
        if (twin.kind(l) == PlantKind::heat_network)
            svc.append_history("heat_demand", twin.heat_trace(l).back().q_demand);
        else if (twin.kind(l) == PlantKind::ev_pv) {
            svc.append_history("ev_demand", twin.ev_trace(l).back().request_kw);
            svc.append_history("pv", twin.ev_trace(l).back().pv_kw);
        }
    }
}

inline std::set<std::string> forecast_channels(const DigitalTwin& twin) {
    std::set<std::string> out;
    for (size_t l = 0; l < twin.size(); ++l) {
        if (twin.kind(l) == PlantKind::heat_network) out.insert("heat_demand");
        if (twin.kind(l) == PlantKind::ev_pv) {
            out.insert("ev_demand");
            out.insert("pv");
        }
    }
    return out;
}

inline double realised_channel(const DigitalTwin& twin, const std::string& channel) {
    for (size_t l = 0; l < twin.size(); ++l) {
        if (channel == "heat_demand" && twin.kind(l) == PlantKind::heat_network)
            return twin.heat_trace(l).back().q_demand;
        if (twin.kind(l) == PlantKind::ev_pv) {
            if (channel == "ev_demand") return twin.ev_trace(l).back().request_kw;
            if (channel == "pv") return twin.ev_trace(l).back().pv_kw;
        }
    }
    return 0.0;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("runner: cannot write '" + path + "'");
    out << content;
}

}  // namespace runner_detail

class DigitalTwin;
void write_traces(const RunConfig& cfg, const ScenarioDoc& doc, const DigitalTwin& twin, const RunResult& res);

inline RunResult run_scenario(const RunConfig& cfg) {
    using namespace runner_detail;
    const auto t_start_wall = std::chrono::steady_clock::now();

    ScenarioDoc doc = load_scenario(cfg.scenario_path);
    const TimeGrid grid = doc.district.subsystems.front().grid;
    const int spd = grid.steps_per_day();
    const int dt = grid.dt_minutes;
    if (cfg.p_lim_override)
        for (auto& [p, series] : doc.district.p_lim) series.assign(series.size(), *cfg.p_lim_override);

    const ExogenousSignals signals = load_signals_csv(resolve(doc.base_dir, doc.signals.file));
    Series ev_profile;
    if (!doc.signals.ev_profile.empty()) ev_profile = load_day_profile_csv(resolve(doc.base_dir, doc.signals.ev_profile));

    const Timestamp warmup_start = grid.start - static_cast<Timestamp>(cfg.train_days) * 86400;
    if (!signals.covers(warmup_start, (cfg.train_days + cfg.days) * spd + grid.steps))
        throw std::runtime_error("runner: signal file does not cover warm-up + run + horizon spill (needs " +
                                 format_iso8601(warmup_start) + " onwards)");

    DigitalTwin twin(doc, &signals, ev_profile, cfg.seed);
    ForecastService forecasts(spd, warmup_start, doc.signals.holidays);

    // warm-up under baseline control collects the training history
    for (int k = 0; k < cfg.train_days * spd; ++k) {
        const Timestamp t = warmup_start + static_cast<Timestamp>(k) * dt * 60;
        twin.apply(t, dt, baseline_setpoints(twin, t, signals, dt));
        append_history_from_twin(forecasts, twin);
    }
    if (cfg.forecast_mode == "ml") {
        int idx = 0;
        for (const auto& channel : forecast_channels(twin)) {
            sjson fc;  // per-channel config from the scenario, if present
            for (size_t l = 0; l < doc.extras.size(); ++l)
                if (doc.extras[l].forecast.is_object() && doc.extras[l].forecast.contains(channel))
                    fc = doc.extras[l].forecast[channel];
            if (fc.is_null()) fc = sjson::object({{"kind", channel == "pv" ? "mlp" : "cluster"}});
            forecasts.train(channel, fc, signals, cfg.seed + 17 * idx++);
        }
    }

    EngineSession session(doc, cfg, &signals, &forecasts, &twin);
    RunResult res;
    const auto channels = forecast_channels(twin);

    const int n_samples = cfg.days * spd;
    for (int k = 0; k < n_samples; ++k) {
        const Timestamp t = grid.start + static_cast<Timestamp>(k) * dt * 60;
        const auto meas = twin.measurements_now(t);
        std::map<std::string, double> sp;
        try {
            sp = session.on_measurements(t, meas);
        } catch (const std::exception& e) {
            throw std::runtime_error("runner: step " + std::to_string(k) + " (" + format_iso8601(t) + "): " + e.what());
        }
        twin.apply(t, dt, sp);
        if (static_cast<int>(session.last_status()) > static_cast<int>(res.worst_status))
            res.worst_status = session.last_status();
        res.metrics.coordination_rounds += session.last_rounds();

        RunResult::DistrictRow row;
        row.t = t;
        for (size_t l = 0; l < twin.size(); ++l)
            for (const auto& [p, v] : twin.last_draw(l)) row.draw[p] += v;
        row.price_elec = signals.at("price_elec", t);
        row.price_gas = signals.at("price_gas", t);
        row.co2_elec = signals.at("co2_elec", t);
        row.co2_gas = signals.columns.count("co2_gas") ? signals.at("co2_gas", t) : 0.184;
        for (const auto& [p, lim] : doc.district.p_lim) {
            row.limit[p] = lim[k % lim.size()];
            if (row.draw.count(p)) row.violation_kw += std::max(0.0, row.draw.at(p) - row.limit.at(p));
        }
        res.district.push_back(std::move(row));

        for (const auto& ch : channels) {
            res.forecast_used[ch].push_back(session.forecast_used(ch));
            res.realised[ch].push_back(realised_channel(twin, ch));
        }
        if (cfg.forecast_mode == "ml") {
            append_history_from_twin(forecasts, twin);
            const CivilTime c = to_civil(t);
            if (c.hour * 60 + c.minute + dt >= 24 * 60) forecasts.on_day_complete();
        }
    }
    res.samples = n_samples;

    // ---- metrics ----------------------------------------------------------
    auto& m = res.metrics;
    m.samples = n_samples;
    const double dt_h = dt / 60.0;
    for (size_t l = 0; l < twin.size(); ++l) {
        const std::string& id = twin.id(l);
        if (twin.kind(l) == PlantKind::heat_network) {
            const auto& trace = twin.heat_trace(l);
            const size_t offset = trace.size() - n_samples;  // skip the warm-up
            double cost = 0.0, co2 = 0.0;
            for (size_t k = offset; k < trace.size(); ++k) {
                const auto& row = res.district[k - offset];
                cost += (trace[k].p_hp_elec * row.price_elec + trace[k].p_gas * row.price_gas) * dt_h;
                co2 += (trace[k].p_hp_elec * row.co2_elec + trace[k].p_gas * row.co2_gas) * dt_h;
                m.supply_mix_kwh[id + ".heat_pump"] += trace[k].q_hp * dt_h;
                m.supply_mix_kwh[id + ".boiler"] += trace[k].q_boiler * dt_h;
                m.supply_mix_kwh[id + ".store_discharge"] += trace[k].u_sto * dt_h;
            }
            m.cost_by_subsystem[id] = cost;
            m.co2_by_subsystem[id] = co2;
            res.heat_traces.push_back(std::vector<HeatMeasurements>(trace.begin() + offset, trace.end()));
            res.heat_configs.push_back(twin.heat_plant(l).config());
            // comfort relative to the scenario band of the first state-space demand
            const auto& sub = doc.district.subsystems[l];
            for (const auto& d : sub.demands)
                if (const auto* ss = std::get_if<StateSpaceDemand>(&d)) {
                    double total_dev = 0.0;
                    for (size_t k = offset; k < trace.size(); ++k) {
                        const double lo = ss->sp_lo[0][(k - offset) % grid.steps];
                        const double hi = ss->sp_up[0][(k - offset) % grid.steps];
                        const double dev = std::max({0.0, lo - trace[k].t_net, trace[k].t_net - hi});
                        m.comfort_max_dev_c = std::max(m.comfort_max_dev_c, dev);
                        total_dev += dev;
                    }
                    m.comfort_mean_dev_c = total_dev / n_samples;
                    break;
                }
        } else if (twin.kind(l) == PlantKind::ev_pv) {
            const auto& trace = twin.ev_trace(l);
            const size_t offset = trace.size() - n_samples;
            double cost = 0.0, co2 = 0.0;
            for (size_t k = offset; k < trace.size(); ++k) {
                const auto& row = res.district[k - offset];
                cost += trace[k].grid_kw * row.price_elec * dt_h;
                co2 += trace[k].grid_kw * row.co2_elec * dt_h;
                m.pv_generated_kwh += trace[k].pv_kw * dt_h;
                m.pv_to_ev_kwh += trace[k].pv_to_ev_kw * dt_h;
                m.ev_served_kwh += trace[k].served_kw * dt_h;
                m.supply_mix_kwh[id + ".grid"] += trace[k].grid_kw * dt_h;
                m.supply_mix_kwh[id + ".pv"] += trace[k].pv_to_ev_kw * dt_h;
            }
            m.cost_by_subsystem[id] = cost;
            m.co2_by_subsystem[id] = co2;
            res.ev_traces.push_back(std::vector<EvMeasurements>(trace.begin() + offset, trace.end()));
        }
    }
    for (const auto& [id, v] : m.cost_by_subsystem) m.total_cost_gbp += v;
    for (const auto& [id, v] : m.co2_by_subsystem) m.total_co2_kg += v;
    if (m.pv_generated_kwh > 0) m.pv_utilisation_pct = 100.0 * m.pv_to_ev_kwh / m.pv_generated_kwh;
    if (m.ev_served_kwh > 0) m.pv_contribution_pct = 100.0 * m.pv_to_ev_kwh / m.ev_served_kwh;
    for (const auto& row : res.district) {
        m.violation_kw.push_back(row.violation_kw);
        m.violation_sum_kwh += row.violation_kw * dt_h;
    }
    for (const auto& ch : channels)
        m.forecast_mae[ch] = mae(res.forecast_used.at(ch), res.realised.at(ch));
    if (res.realised.count("heat_demand")) {
        const auto& r = res.realised.at("heat_demand");
        double mean = 0.0;
        for (double v : r) mean += v;
        if (mean > 1e-9) {
            m.heat_forecast_nmbe_pct = nmbe_pct(r, res.forecast_used.at("heat_demand"));
            m.heat_forecast_cvrmse_pct = cvrmse_pct(r, res.forecast_used.at("heat_demand"));
        }
    }
    m.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start_wall).count();

    if (!cfg.out_dir.empty()) write_traces(cfg, doc, twin, res);
    res.out_dir = cfg.out_dir;
    return res;
}

inline void write_traces(const RunConfig& cfg, const ScenarioDoc& doc, const DigitalTwin& twin,
                         const RunResult& res) {
    using namespace runner_detail;
    std::filesystem::create_directories(cfg.out_dir);
    char buf[256];
    const int n = res.samples;

    size_t heat_at = 0, ev_at = 0;
    for (size_t l = 0; l < twin.size(); ++l) {
        std::string csv;
        if (twin.kind(l) == PlantKind::heat_network) {
            const auto& trace = res.heat_traces[heat_at++];
            csv = "step,timestamp,t_net,t_sto,soc_sto,t_in,q_hp,q_boiler,p_hp_elec,p_gas,v_sto,u_sto,q_demand,"
                  "q_net_loss,q_sto_loss,q_reject,cop,t_amb,clamped\n";
            for (int k = 0; k < n; ++k) {
                const auto& r = trace[k];
                std::snprintf(buf, sizeof buf,
                              "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n",
                              k, format_iso8601(r.t).c_str(), r.t_net, r.t_sto, r.soc_sto, r.t_in, r.q_hp, r.q_boiler,
                              r.p_hp_elec, r.p_gas, r.v_sto, r.u_sto, r.q_demand, r.q_net_loss, r.q_sto_loss,
                              r.q_reject, r.cop_actual, r.t_amb, r.clamped ? 1 : 0);
                csv += buf;
            }
        } else if (twin.kind(l) == PlantKind::ev_pv) {
            const auto& trace = res.ev_traces[ev_at++];
            csv = "step,timestamp,request_kw,delayable_kw,deferred_kw,replayed_kw,served_kw,backlog_kwh,pv_kw,"
                  "pv_to_ev_kw,grid_kw,forced_flush\n";
            for (int k = 0; k < n; ++k) {
                const auto& r = trace[k];
                std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n", k,
                              format_iso8601(r.t).c_str(), r.request_kw, r.delayable_kw, r.deferred_kw, r.replayed_kw,
                              r.served_kw, r.backlog_kwh, r.pv_kw, r.pv_to_ev_kw, r.grid_kw, r.forced_flush ? 1 : 0);
                csv += buf;
            }
        } else {
            continue;
        }
        write_file(cfg.out_dir + "/plant_" + twin.id(l) + ".csv", csv);
    }

    std::string csv = "step,timestamp";
    std::vector<std::string> resources;
    for (const auto& [p, _] : res.district.front().draw) resources.push_back(p);
    for (const auto& p : resources) csv += ",draw_" + p;
    for (const auto& [p, _] : res.district.front().limit) csv += ",lim_" + p;
    csv += ",violation_kw,price_elec,price_gas,co2_elec,co2_gas\n";
    for (int k = 0; k < n; ++k) {
        const auto& r = res.district[k];
        csv += std::to_string(k) + "," + format_iso8601(r.t);
        for (const auto& p : resources) {
            std::snprintf(buf, sizeof buf, ",%.6f", r.draw.count(p) ? r.draw.at(p) : 0.0);
            csv += buf;
        }
        for (const auto& [p, lim] : r.limit) {
            std::snprintf(buf, sizeof buf, ",%.6f", lim);
            csv += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f\n", r.violation_kw, r.price_elec, r.price_gas,
                      r.co2_elec, r.co2_gas);
        csv += buf;
    }
    write_file(cfg.out_dir + "/district.csv", csv);

    write_file(cfg.out_dir + "/metrics.txt", res.metrics.summary());
    sjson mj;
    mj["total_cost_gbp"] = res.metrics.total_cost_gbp;
    mj["total_co2_kg"] = res.metrics.total_co2_kg;
    mj["cost_by_subsystem"] = res.metrics.cost_by_subsystem;
    mj["co2_by_subsystem"] = res.metrics.co2_by_subsystem;
    mj["supply_mix_kwh"] = res.metrics.supply_mix_kwh;
    mj["pv_generated_kwh"] = res.metrics.pv_generated_kwh;
    mj["pv_utilisation_pct"] = res.metrics.pv_utilisation_pct;
    mj["pv_contribution_pct"] = res.metrics.pv_contribution_pct;
    mj["violation_sum_kwh"] = res.metrics.violation_sum_kwh;
    mj["comfort_max_dev_c"] = res.metrics.comfort_max_dev_c;
    mj["comfort_mean_dev_c"] = res.metrics.comfort_mean_dev_c;
    mj["forecast_mae"] = res.metrics.forecast_mae;
    mj["samples"] = res.metrics.samples;
    mj["coordination_rounds"] = res.metrics.coordination_rounds;
    write_file(cfg.out_dir + "/metrics.json", mj.dump(2) + "\n");

    sjson rc;
    rc["scenario"] = cfg.scenario_path;
    rc["days"] = cfg.days;
    rc["train_days"] = cfg.train_days;
    rc["coordinate"] = cfg.coordinate_enabled;
    rc["forecast_mode"] = cfg.forecast_mode;
    rc["ev_delay_enabled"] = cfg.ev_delay_enabled;
    rc["seed"] = cfg.seed;
    rc["alpha_cost_scale"] = cfg.alpha_cost_scale;
    rc["alpha_co2_scale"] = cfg.alpha_co2_scale;
    write_file(cfg.out_dir + "/run_config.json", rc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Pareto sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    double alpha_cost = 1.0;
    double alpha_co2 = 0.0;
    bool failed = false;
    std::string error;
    double cost_gbp = 0.0;
    double co2_kg = 0.0;
};

/// One run per weight pair; failures are recorded and the sweep continues.
/// The table comes back sorted by the CO2 weight.
inline std::vector<SweepPoint> pareto_sweep(const RunConfig& base, std::vector<std::pair<double, double>> weights) {
    if (weights.size() < 2) throw std::invalid_argument("pareto_sweep: need at least 2 weight pairs");
    std::vector<SweepPoint> out;
    for (const auto& [a_cost, a_co2] : weights) {
        SweepPoint pt;
        pt.alpha_cost = a_cost;
        pt.alpha_co2 = a_co2;
        RunConfig cfg = base;
        cfg.alpha_cost_scale = a_cost;
        cfg.alpha_co2_scale = a_co2;
        if (!base.out_dir.empty()) {
            char tag[64];
            std::snprintf(tag, sizeof tag, "/sweep_c%.3f_e%.3f", a_cost, a_co2);
            cfg.out_dir = base.out_dir + tag;
        }
        try {
            const auto res = run_scenario(cfg);
            pt.cost_gbp = res.metrics.total_cost_gbp;
            pt.co2_kg = res.metrics.total_co2_kg;
        } catch (const std::exception& e) {
            pt.failed = true;
            pt.error = e.what();
        }
        out.push_back(std::move(pt));
    }
    std::stable_sort(out.begin(), out.end(), [](const SweepPoint& a, const SweepPoint& b) {
        return a.alpha_co2 < b.alpha_co2;
    });
    if (!base.out_dir.empty()) {
        std::string csv = "alpha_cost,alpha_co2,cost_gbp,co2_kg,error\n";
        char buf[160];
        for (const auto& p : out) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%s\n", p.alpha_cost, p.alpha_co2, p.cost_gbp,
                          p.co2_kg, p.failed ? p.error.c_str() : "");
            csv += buf;
        }
        std::filesystem::create_directories(base.out_dir);
        runner_detail::write_file(base.out_dir + "/frontier.csv", csv);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report: recompute headline metrics from written traces
// ---------------------------------------------------------------------------

inline std::map<std::string, Series> read_csv_columns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("report: empty file '" + path + "'");
    std::vector<std::string> headers;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) headers.push_back(cell);
    std::map<std::string, Series> cols;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        for (const auto& h : headers) {
            if (!std::getline(ss, cell, ',')) break;
            if (h == "timestamp") continue;
            try {
                cols[h].push_back(std::stod(cell));
            } catch (...) {
                cols[h].push_back(0.0);
            }
        }
    }
    return cols;
}

/// Spreadsheet-style recomputation of the headline numbers from the trace CSVs.
inline MetricsReport report_from_traces(const std::string& dir, int dt_minutes = 15) {
    MetricsReport m;
    const double dt_h = dt_minutes / 60.0;
    const auto district = read_csv_columns(dir + "/district.csv");
    const auto& price_elec = district.at("price_elec");
    const auto& price_gas = district.at("price_gas");
    const auto& co2_elec = district.at("co2_elec");
    const auto& co2_gas = district.at("co2_gas");
    m.samples = static_cast<int>(price_elec.size());
    if (district.count("violation_kw"))
        for (double v : district.at("violation_kw")) {
            m.violation_kw.push_back(v);
            m.violation_sum_kwh += v * dt_h;
        }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("plant_", 0) != 0) continue;
        const std::string id = name.substr(6, name.size() - 10);
        const auto cols = read_csv_columns(entry.path().string());
        if (cols.count("q_hp")) {
            double cost = 0.0, co2 = 0.0;
            for (int k = 0; k < m.samples; ++k) {
                cost += (cols.at("p_hp_elec")[k] * price_elec[k] + cols.at("p_gas")[k] * price_gas[k]) * dt_h;
                co2 += (cols.at("p_hp_elec")[k] * co2_elec[k] + cols.at("p_gas")[k] * co2_gas[k]) * dt_h;
                m.supply_mix_kwh[id + ".heat_pump"] += cols.at("q_hp")[k] * dt_h;
                m.supply_mix_kwh[id + ".boiler"] += cols.at("q_boiler")[k] * dt_h;
                m.supply_mix_kwh[id + ".store_discharge"] += cols.at("u_sto")[k] * dt_h;
            }
            m.cost_by_subsystem[id] = cost;
            m.co2_by_subsystem[id] = co2;
        } else if (cols.count("grid_kw")) {
            double cost = 0.0, co2 = 0.0;
            for (int k = 0; k < m.samples; ++k) {
                cost += cols.at("grid_kw")[k] * price_elec[k] * dt_h;
                co2 += cols.at("grid_kw")[k] * co2_elec[k] * dt_h;
                m.pv_generated_kwh += cols.at("pv_kw")[k] * dt_h;
                m.pv_to_ev_kwh += cols.at("pv_to_ev_kw")[k] * dt_h;
                m.ev_served_kwh += cols.at("served_kw")[k] * dt_h;
                m.supply_mix_kwh[id + ".grid"] += cols.at("grid_kw")[k] * dt_h;
                m.supply_mix_kwh[id + ".pv"] += cols.at("pv_to_ev_kw")[k] * dt_h;
            }
            m.cost_by_subsystem[id] = cost;
            m.co2_by_subsystem[id] = co2;
        }
    }
    for (const auto& [id, v] : m.cost_by_subsystem) m.total_cost_gbp += v;
    for (const auto& [id, v] : m.co2_by_subsystem) m.total_co2_kg += v;
    if (m.pv_generated_kwh > 0) m.pv_utilisation_pct = 100.0 * m.pv_to_ev_kwh / m.pv_generated_kwh;
    if (m.ev_served_kwh > 0) m.pv_contribution_pct = 100.0 * m.pv_to_ev_kwh / m.ev_served_kwh;
    return m;
}

// ---------------------------------------------------------------------------
// Socket service wrapping an EngineSession
// ---------------------------------------------------------------------------

/// Train as for a normal run, then answer measurement messages over the link
/// until the peer goes quiet. Returns the number of exchanges served.
inline int serve_scenario(const RunConfig& cfg, int port, LinkOptions link_opt = {},
                          std::function<void(int)> on_ready = {}) {
    ScenarioDoc doc = load_scenario(cfg.scenario_path);
    const TimeGrid grid = doc.district.subsystems.front().grid;
    const int spd = grid.steps_per_day();
    const ExogenousSignals signals = load_signals_csv(runner_detail::resolve(doc.base_dir, doc.signals.file));
    Series ev_profile;
    if (!doc.signals.ev_profile.empty())
        ev_profile = load_day_profile_csv(runner_detail::resolve(doc.base_dir, doc.signals.ev_profile));
    const Timestamp warmup_start = grid.start - static_cast<Timestamp>(cfg.train_days) * 86400;

    DigitalTwin twin(doc, &signals, ev_profile, cfg.seed);
    ForecastService forecasts(spd, warmup_start, doc.signals.holidays);
    for (int k = 0; k < cfg.train_days * spd; ++k) {
        const Timestamp t = warmup_start + static_cast<Timestamp>(k) * grid.dt_minutes * 60;
        twin.apply(t, grid.dt_minutes, runner_detail::baseline_setpoints(twin, t, signals, grid.dt_minutes));
        runner_detail::append_history_from_twin(forecasts, twin);
    }
    int idx = 0;
    for (const auto& channel : runner_detail::forecast_channels(twin)) {
        sjson fc = sjson::object({{"kind", channel == "pv" ? "mlp" : "cluster"}});
        forecasts.train(channel, fc, signals, cfg.seed + 17 * idx++);
    }

    RunConfig serve_cfg = cfg;
    serve_cfg.forecast_mode = "ml";  // no oracle across the wire
    EngineSession session(doc, serve_cfg, &signals, &forecasts, nullptr);
    int exchanges = 0;
    LinkServer server(port,
                      [&](Timestamp t, const std::map<std::string, double>& values) {
                          auto sp = session.on_measurements(t, values);
                          ++exchanges;
                          return sp;
                      },
                      link_opt);
    if (on_ready) on_ready(server.port());
    server.run();
    return exchanges;
}

}  // namespace sems
