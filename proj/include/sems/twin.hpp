#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sems/core.hpp"
#include "sems/rng.hpp"

namespace sems {

// ---------------------------------------------------------------------------
// Exogenous signal playback
// ---------------------------------------------------------------------------

/// Sampled exogenous series replayed from CSV. Header names the columns; the
/// conventional ones are timestamp,t_amb,dir_irr,dif_irr,price_elec,price_gas,
/// co2_elec (extras such as t_source are carried under their header name).
/// Rows must be contiguous at a fixed dt; gaps are an error.
struct ExogenousSignals {
    Timestamp start = 0;
    int dt_minutes = 15;
    std::map<std::string, Vector> columns;

    int length() const { return columns.empty() ? 0 : static_cast<int>(columns.begin()->second.size()); }

    bool covers(Timestamp t, int n_steps) const {
        const std::int64_t step = (t - start) / (60 * dt_minutes);
        return t >= start && (t - start) % (60 * dt_minutes) == 0 && step + n_steps <= length();
    }

    double at(const std::string& col, Timestamp t) const {
        auto it = columns.find(col);
        if (it == columns.end()) throw std::runtime_error("signals: unknown column '" + col + "'");
        if (!covers(t, 1))
            throw std::runtime_error("signals: no sample for " + format_iso8601(t) + " in column '" + col + "'");
        return it->second[(t - start) / (60 * dt_minutes)];
    }

    Series window(const std::string& col, Timestamp from, int n_steps) const {
        if (!covers(from, n_steps))
            throw std::runtime_error("signals: window starting " + format_iso8601(from) + " (" +
                                     std::to_string(n_steps) + " steps) not covered");
        const auto& v = columns.at(col);
        const auto s = (from - start) / (60 * dt_minutes);
        return Series(v.begin() + s, v.begin() + s + n_steps);
    }
};

inline ExogenousSignals load_signals_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("signals: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("signals: empty file '" + path + "'");
    std::vector<std::string> headers;
    {
        std::stringstream ss(line);
        std::string h;
        while (std::getline(ss, h, ',')) headers.push_back(h);
    }
    if (headers.empty() || headers[0] != "timestamp")
        throw std::runtime_error("signals: first column must be 'timestamp' in '" + path + "'");
    ExogenousSignals out;
    for (size_t c = 1; c < headers.size(); ++c) out.columns[headers[c]] = {};
    Timestamp prev = 0;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        const Timestamp t = parse_iso8601(cell);
        if (row == 0) {
            out.start = t;
        } else if (row == 1) {
            out.dt_minutes = static_cast<int>((t - prev) / 60);
            if (out.dt_minutes <= 0) throw std::runtime_error("signals: non-increasing timestamps in '" + path + "'");
        } else if (t - prev != 60 * out.dt_minutes) {
            throw std::runtime_error("signals: gap before " + format_iso8601(t) + " in '" + path + "'");
        }
        prev = t;
        for (size_t c = 1; c < headers.size(); ++c) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("signals: short row at " + format_iso8601(t) + " in '" + path + "'");
            out.columns[headers[c]].push_back(std::stod(cell));
        }
        ++row;
    }
    if (row == 0) throw std::runtime_error("signals: no data rows in '" + path + "'");
    for (const auto& [name, v] : out.columns) {
        if (name.find("irr") != std::string::npos)
            for (double x : v)
                if (x < 0) throw std::runtime_error("signals: negative irradiance in column '" + name + "'");
    }
    return out;
}

/// Daily base profile (kW per step-of-day), one value per line or step,kw rows.
inline Series load_day_profile_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("profile: cannot open '" + path + "'");
    Series out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
        const auto comma = line.find(',');
        out.push_back(std::stod(comma == std::string::npos ? line : line.substr(comma + 1)));
    }
    if (out.empty()) throw std::runtime_error("profile: no values in '" + path + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Component models
// ---------------------------------------------------------------------------

/// Capped Carnot heat-pump efficiency between source and sink temperatures.
inline double cop(double t_source_c, double t_sink_c, double carnot_fraction) {
    if (t_sink_c <= t_source_c) throw std::invalid_argument("cop: sink must be warmer than source");
    const double ideal = (t_sink_c + 273.15) / (t_sink_c - t_source_c);
    return std::clamp(carnot_fraction * ideal, 1.0, 6.0);
}

struct PvArray {
    double capacity_kw = 270.0;
    double area_m2 = 1500.0;
    double efficiency = 0.18;
    double tilt_deg = 30.0;
    double azimuth_deg = 0.0;  // from due south, west positive
    double latitude_deg = 51.5;
};

/// Plane-of-array power from direct and diffuse irradiance (W/m^2): declination
/// from the day number, hour angle from UTC time (site longitude ~0), isotropic
/// diffuse on the tilt. Zero whenever the sun is below the horizon.
inline double pv_power(const PvArray& pv, Timestamp t, double direct_wm2, double diffuse_wm2) {
    if (direct_wm2 < 0 || diffuse_wm2 < 0) throw std::invalid_argument("pv_power: negative irradiance");
    const double deg = 3.14159265358979323846 / 180.0;
    const int n = day_of_year(t);
    const double decl = 23.45 * deg * std::sin(2 * 3.14159265358979323846 * (284 + n) / 365.0);
    const CivilTime c = to_civil(t);
    const double solar_hours = c.hour + c.minute / 60.0 + c.second / 3600.0;
    const double hour_angle = (solar_hours - 12.0) * 15.0 * deg;
    const double lat = pv.latitude_deg * deg;
    const double sin_alt = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
    if (sin_alt <= 0.0) return 0.0;

    const double beta = pv.tilt_deg * deg;
    const double gamma = pv.azimuth_deg * deg;
    const double cos_inc = std::sin(decl) * std::sin(lat) * std::cos(beta) -
                           std::sin(decl) * std::cos(lat) * std::sin(beta) * std::cos(gamma) +
                           std::cos(decl) * std::cos(lat) * std::cos(beta) * std::cos(hour_angle) +
                           std::cos(decl) * std::sin(lat) * std::sin(beta) * std::cos(gamma) * std::cos(hour_angle) +
                           std::cos(decl) * std::sin(beta) * std::sin(gamma) * std::sin(hour_angle);
    const double poa = direct_wm2 * std::max(0.0, cos_inc) + diffuse_wm2 * (1.0 + std::cos(beta)) / 2.0;
    return std::clamp(pv.area_m2 * pv.efficiency * poa / 1000.0, 0.0, pv.capacity_kw);
}

// ---------------------------------------------------------------------------
// Heat-network plant
// ---------------------------------------------------------------------------

struct HeatPlantConfig {
    double c_net = 8.0;    // network water thermal capacitance, kWh/degC
    double ua_net = 0.6;   // network loss coefficient to ambient, kW/degC
    double t_net_init = 55.0;
    double c_sto = 4.0;    // store capacitance, kWh/degC
    double ua_sto = 0.05;  // store loss coefficient, kW/degC
    double t_sto_init = 45.0;
    double t_sto_max = 60.0;
    double t_sto_ref = 40.0;      // SoC zero point
    double t_plant_room = 20.0;   // store loss sink
    double sto_eta_charge = 0.98;
    double sto_eta_discharge = 0.98;
    double sto_charge_cap = 150.0;     // kW
    double sto_discharge_cap = 150.0;  // kW
    double boiler_eta = 0.9;
    double boiler_cap = 400.0;  // kW heat
    double hp_cap = 250.0;      // kW heat
    double hp_carnot_fraction = 0.45;
    std::string hp_source_signal = "t_source";
    // 2R2C building aggregate
    double r_ia = 0.02;   // degC/kW interior<->envelope
    double r_ae = 0.05;   // degC/kW envelope<->ambient
    double c_i = 120.0;   // kWh/degC
    double c_e = 500.0;   // kWh/degC
    double t_in_init = 19.0;
    double t_env_node_init = 14.0;
    double thermostat_gain = 80.0;  // kW/degC below set-point
    double radiator_cap = 420.0;    // kW
    double t_set_day = 20.0;
    double t_set_night = 16.5;
    int day_start_minutes = 6 * 60;
    int day_end_minutes = 22 * 60;
};

struct HeatSetpoints {
    double q_hp = 0.0;      // kW heat
    double q_boiler = 0.0;  // kW heat
    double v_sto = 0.0;     // kW heat into the store
    double u_sto = 0.0;     // kW heat out of the store
};

/// One step of plant telemetry: pre-step states, flows during the step,
/// post-step states. Everything the balance check and the traces need.
struct HeatMeasurements {
    Timestamp t = 0;
    double t_net_pre = 0, t_sto_pre = 0, t_in_pre = 0, t_env_node_pre = 0;
    double t_net = 0, t_sto = 0, t_in = 0, t_env_node = 0;
    double soc_sto = 0;  // kWh above the reference temperature, post-step
    double q_hp = 0, q_boiler = 0;
    double p_hp_elec = 0, p_gas = 0;
    double v_sto = 0, u_sto = 0;          // realised store charge/discharge kW
    double q_sto_loss = 0, q_net_loss = 0;  // kW
    double q_demand = 0;                   // building draw kW
    double q_reject = 0;                   // store overflow dumped kW
    double q_building_in = 0;              // heat into the interior node kW
    double cop_actual = 0;
    double t_amb = 0;
    bool clamped = false;                  // any set-point was cut by a cap
};

class HeatNetworkPlant {
public:
    explicit HeatNetworkPlant(const HeatPlantConfig& cfg)
        : cfg_(cfg), t_net_(cfg.t_net_init), t_sto_(cfg.t_sto_init), t_in_(cfg.t_in_init),
          t_env_node_(cfg.t_env_node_init) {}

    double t_net() const { return t_net_; }
    double t_sto() const { return t_sto_; }
    double t_in() const { return t_in_; }
    double soc() const { return cfg_.c_sto * (t_sto_ - cfg_.t_sto_ref); }
    double soc_max() const { return cfg_.c_sto * (cfg_.t_sto_max - cfg_.t_sto_ref); }
    const HeatPlantConfig& config() const { return cfg_; }

    double heating_setpoint(Timestamp t) const {
        const CivilTime c = to_civil(t);
        const int minutes = c.hour * 60 + c.minute;
        return minutes >= cfg_.day_start_minutes && minutes < cfg_.day_end_minutes ? cfg_.t_set_day
                                                                                   : cfg_.t_set_night;
    }

    /// Thermostatic draw the estate would take right now, before network derating.
    double demand_request(Timestamp t) const {
        return std::clamp(cfg_.thermostat_gain * (heating_setpoint(t) - t_in_), 0.0, cfg_.radiator_cap);
    }

    HeatMeasurements step(Timestamp t, int dt_minutes, const HeatSetpoints& sp, double t_amb, double t_source) {
        const double dt_h = dt_minutes / 60.0;
        HeatMeasurements m;
        m.t = t;
        m.t_net_pre = t_net_;
        m.t_sto_pre = t_sto_;
        m.t_in_pre = t_in_;
        m.t_env_node_pre = t_env_node_;
        m.t_amb = t_amb;

        const double sink = std::max(t_net_, t_source + 5.0);
        m.cop_actual = cop(t_source, sink, cfg_.hp_carnot_fraction);
        m.q_hp = std::clamp(sp.q_hp, 0.0, cfg_.hp_cap);
        m.q_boiler = std::clamp(sp.q_boiler, 0.0, cfg_.boiler_cap);
        m.p_hp_elec = m.q_hp / m.cop_actual;
        m.p_gas = m.q_boiler / cfg_.boiler_eta;

        // store flows: charging is bounded by what the supplies generate
        m.v_sto = std::clamp(sp.v_sto, 0.0, std::min(cfg_.sto_charge_cap, m.q_hp + m.q_boiler));
        const double available = std::max(0.0, cfg_.c_sto * (t_sto_ - cfg_.t_sto_ref));
        m.u_sto = std::clamp(sp.u_sto, 0.0, std::min(cfg_.sto_discharge_cap,
                                                     available * cfg_.sto_eta_discharge / dt_h));
        m.clamped = std::abs(m.q_hp - sp.q_hp) > 1e-9 || std::abs(m.q_boiler - sp.q_boiler) > 1e-9 ||
                    std::abs(m.v_sto - sp.v_sto) > 1e-9 || std::abs(m.u_sto - sp.u_sto) > 1e-9;

        // building thermostat draws from the network, derated when the network runs cold
        const double derate = std::clamp((t_net_ - 30.0) / 20.0, 0.0, 1.0);
        m.q_demand = demand_request(t) * derate;
        m.q_building_in = m.q_demand;

        // store balance with overflow rejection at t_sto_max
        m.q_sto_loss = cfg_.ua_sto * (t_sto_ - cfg_.t_plant_room);
        double sto_in = cfg_.sto_eta_charge * m.v_sto - m.u_sto / cfg_.sto_eta_discharge - m.q_sto_loss;
        double t_sto_next = t_sto_ + dt_h * sto_in / cfg_.c_sto;
        if (t_sto_next > cfg_.t_sto_max) {
            m.q_reject = (t_sto_next - cfg_.t_sto_max) * cfg_.c_sto / dt_h;
            t_sto_next = cfg_.t_sto_max;
        }

        // network balance
        m.q_net_loss = cfg_.ua_net * (t_net_ - t_amb);
        const double net_in = m.q_hp + m.q_boiler + m.u_sto - m.v_sto - m.q_demand - m.q_net_loss;
        const double t_net_next = t_net_ + dt_h * net_in / cfg_.c_net;

        // building 2R2C
        const double q_ie = (t_in_ - t_env_node_) / cfg_.r_ia;
        const double q_ea = (t_env_node_ - t_amb) / cfg_.r_ae;
        const double t_in_next = t_in_ + dt_h * (m.q_building_in - q_ie) / cfg_.c_i;
        const double t_env_next = t_env_node_ + dt_h * (q_ie - q_ea) / cfg_.c_e;

        t_sto_ = t_sto_next;
        t_net_ = t_net_next;
        t_in_ = t_in_next;
        t_env_node_ = t_env_next;

        m.t_net = t_net_;
        m.t_sto = t_sto_;
        m.t_in = t_in_;
        m.t_env_node = t_env_node_;
        m.soc_sto = soc();
        return m;
    }

private:
    HeatPlantConfig cfg_;
    double t_net_, t_sto_, t_in_, t_env_node_;
};

/// Worst per-step network+store energy-balance residual (kWh) recomputed from
/// the telemetry alone.
inline double heat_energy_balance(const std::vector<HeatMeasurements>& trace, const HeatPlantConfig& cfg,
                                  int dt_minutes) {
    const double dt_h = dt_minutes / 60.0;
    double worst = 0.0;
    for (const auto& m : trace) {
        const double net_delta = cfg.c_net * (m.t_net - m.t_net_pre);
        const double net_flow = (m.q_hp + m.q_boiler + m.u_sto - m.v_sto - m.q_demand - m.q_net_loss) * dt_h;
        worst = std::max(worst, std::abs(net_flow - net_delta));
        const double sto_delta = cfg.c_sto * (m.t_sto - m.t_sto_pre);
        const double sto_flow = (cfg.sto_eta_charge * m.v_sto - m.u_sto / cfg.sto_eta_discharge - m.q_sto_loss -
                                 m.q_reject) * dt_h;
        worst = std::max(worst, std::abs(sto_flow - sto_delta));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// EV fleet + PV plant
// ---------------------------------------------------------------------------

struct EvPvConfig {
    int n_vehicles = 300;
    double delayable_fraction = 0.5;
    double noise_sigma = 0.1;
    Series base_profile;  // kW per step of day for the whole fleet
    PvArray pv;
};

struct EvSetpoints {
    double defer_kw = 0.0;   // demand to push into the backlog
    double replay_kw = 0.0;  // backlog to serve now
};

struct EvMeasurements {
    Timestamp t = 0;
    double request_kw = 0;     // realised charging request (base x noise)
    double delayable_kw = 0;   // share of the request that may be deferred
    double deferred_kw = 0;
    double replayed_kw = 0;
    double served_kw = 0;      // power actually delivered to vehicles
    double backlog_pre_kwh = 0;
    double backlog_kwh = 0;
    double pv_kw = 0;
    double pv_to_ev_kw = 0;
    double grid_kw = 0;        // served - pv_to_ev
    bool forced_flush = false; // end-of-day backlog service
};

class EvPvPlant {
public:
    EvPvPlant(const EvPvConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
        if (cfg_.base_profile.empty()) throw std::invalid_argument("EvPvPlant: empty base profile");
    }

    double backlog() const { return backlog_kwh_; }
    const EvPvConfig& config() const { return cfg_; }

    /// Deterministic preview of the realised request sequence from now on;
    /// consumes no noise from the live stream (used for oracle forecasts).
    Series preview_requests(Timestamp from, int dt_minutes, int n_steps) const {
        Rng copy = rng_;
        Series out(n_steps);
        for (int i = 0; i < n_steps; ++i)
            out[i] = base_at(from + static_cast<Timestamp>(i) * dt_minutes * 60, dt_minutes) *
                     copy.lognormal_factor(cfg_.noise_sigma);
        return out;
    }

    EvMeasurements step(Timestamp t, int dt_minutes, const EvSetpoints& sp, double dir_irr, double dif_irr) {
        const double dt_h = dt_minutes / 60.0;
        EvMeasurements m;
        m.t = t;
        m.backlog_pre_kwh = backlog_kwh_;
        m.request_kw = base_at(t, dt_minutes) * rng_.lognormal_factor(cfg_.noise_sigma);
        m.delayable_kw = cfg_.delayable_fraction * m.request_kw;

        const bool last_step_of_day = is_last_step_of_day(t, dt_minutes);
        m.forced_flush = last_step_of_day && backlog_kwh_ > 0;
        m.deferred_kw = last_step_of_day ? 0.0 : std::clamp(sp.defer_kw, 0.0, m.delayable_kw);
        const double replay_cap = backlog_kwh_ / dt_h;
        m.replayed_kw = last_step_of_day ? replay_cap : std::clamp(sp.replay_kw, 0.0, replay_cap);

        m.served_kw = m.request_kw - m.deferred_kw + m.replayed_kw;
        backlog_kwh_ += (m.deferred_kw - m.replayed_kw) * dt_h;
        if (backlog_kwh_ < 1e-12) backlog_kwh_ = 0.0;
        m.backlog_kwh = backlog_kwh_;

        m.pv_kw = pv_power(cfg_.pv, t, dir_irr, dif_irr);
        m.pv_to_ev_kw = std::min(m.pv_kw, m.served_kw);
        m.grid_kw = m.served_kw - m.pv_to_ev_kw;
        return m;
    }

private:
    EvPvConfig cfg_;
    Rng rng_;
    double backlog_kwh_ = 0.0;

    double base_at(Timestamp t, int dt_minutes) const {
        const CivilTime c = to_civil(t);
        const int step = (c.hour * 60 + c.minute) / dt_minutes;
        return cfg_.base_profile[step % cfg_.base_profile.size()];
    }

    static bool is_last_step_of_day(Timestamp t, int dt_minutes) {
        const CivilTime c = to_civil(t);
        return c.hour * 60 + c.minute + dt_minutes >= 24 * 60;
    }
};

/// EV service ledger: served energy must equal requested minus backlog growth.
inline double ev_energy_balance(const std::vector<EvMeasurements>& trace, int dt_minutes) {
    const double dt_h = dt_minutes / 60.0;
    double worst = 0.0;
    for (const auto& m : trace) {
        const double residual = (m.request_kw - m.deferred_kw + m.replayed_kw - m.served_kw) * dt_h;
        worst = std::max(worst, std::abs(residual));
        const double ledger = m.backlog_kwh - m.backlog_pre_kwh - (m.deferred_kw - m.replayed_kw) * dt_h;
        worst = std::max(worst, std::abs(ledger));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Plant config parsing (scenario `plant` blocks)
// ---------------------------------------------------------------------------

inline HeatPlantConfig parse_heat_plant(const std::map<std::string, double>& kv, const std::string& source_signal) {
    HeatPlantConfig c;
    auto get = [&](const char* key, double def) {
        auto it = kv.find(key);
        return it != kv.end() ? it->second : def;
    };
    c.c_net = get("c_net", c.c_net);
    c.ua_net = get("ua_net", c.ua_net);
    c.t_net_init = get("t_net_init", c.t_net_init);
    c.c_sto = get("c_sto", c.c_sto);
    c.ua_sto = get("ua_sto", c.ua_sto);
    c.t_sto_init = get("t_sto_init", c.t_sto_init);
    c.t_sto_max = get("t_sto_max", c.t_sto_max);
    c.t_sto_ref = get("t_sto_ref", c.t_sto_ref);
    c.t_plant_room = get("t_plant_room", c.t_plant_room);
    c.sto_eta_charge = get("sto_eta_charge", c.sto_eta_charge);
    c.sto_eta_discharge = get("sto_eta_discharge", c.sto_eta_discharge);
    c.sto_charge_cap = get("sto_charge_cap", c.sto_charge_cap);
    c.sto_discharge_cap = get("sto_discharge_cap", c.sto_discharge_cap);
    c.boiler_eta = get("boiler_eta", c.boiler_eta);
    c.boiler_cap = get("boiler_cap", c.boiler_cap);
    c.hp_cap = get("hp_cap", c.hp_cap);
    c.hp_carnot_fraction = get("hp_carnot_fraction", c.hp_carnot_fraction);
    c.r_ia = get("r_ia", c.r_ia);
    c.r_ae = get("r_ae", c.r_ae);
    c.c_i = get("c_i", c.c_i);
    c.c_e = get("c_e", c.c_e);
    c.t_in_init = get("t_in_init", c.t_in_init);
    c.t_env_node_init = get("t_env_node_init", c.t_env_node_init);
    c.thermostat_gain = get("thermostat_gain", c.thermostat_gain);
    c.radiator_cap = get("radiator_cap", c.radiator_cap);
    c.t_set_day = get("t_set_day", c.t_set_day);
    c.t_set_night = get("t_set_night", c.t_set_night);
    c.day_start_minutes = static_cast<int>(get("day_start_minutes", c.day_start_minutes));
    c.day_end_minutes = static_cast<int>(get("day_end_minutes", c.day_end_minutes));
    if (!source_signal.empty()) c.hp_source_signal = source_signal;
    return c;
}

}  // namespace sems
