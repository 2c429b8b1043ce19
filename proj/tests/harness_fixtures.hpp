#pragma once

// Small self-contained scenario directories for harness tests: written to a
// temp dir, removed on destruction.

#include <filesystem>
#include <fstream>
#include <string>

#include "sems/core.hpp"

namespace sems_test {

using namespace sems;

struct TempScenarioDir {
    std::string dir;

    explicit TempScenarioDir(const std::string& name) : dir("tmp_" + name) {
        std::filesystem::create_directories(dir);
    }
    ~TempScenarioDir() { std::filesystem::remove_all(dir); }

    std::string path(const std::string& file) const { return dir + "/" + file; }

    void write(const std::string& file, const std::string& content) const {
        std::ofstream out(path(file));
        out << content;
    }

    /// Flat synthetic signals: constant ambient/prices, optional midday sun.
    void write_signals(const std::string& file, Timestamp start, int days, bool with_sun,
                       double price_night = 0.06, double price_day = 0.12) const {
        std::string csv = "timestamp,t_amb,dir_irr,dif_irr,price_elec,price_gas,co2_elec,co2_gas,t_source\n";
        char buf[200];
        for (int k = 0; k < days * 96; ++k) {
            const Timestamp t = start + static_cast<Timestamp>(k) * 900;
            const int step = k % 96;
            const double hour = step * 0.25;
            const double price = hour < 6 ? price_night : price_day;
            double dir = 0.0, dif = 0.0;
            if (with_sun && hour >= 9 && hour < 15) {
                dir = 600.0;
                dif = 80.0;
            }
            std::snprintf(buf, sizeof buf, "%s,%.3f,%.2f,%.2f,%.5f,0.03500,%.5f,0.18400,10.000\n",
                          format_iso8601(t).c_str(), 8.0, dir, dif, price, 0.16);
            csv += buf;
        }
        write(file, csv);
    }

    void write_profile(const std::string& file, const Series& day_kw) const {
        std::string csv = "step,kw\n";
        for (size_t s = 0; s < day_kw.size(); ++s) csv += std::to_string(s) + "," + std::to_string(day_kw[s]) + "\n";
        write(file, csv);
    }

    /// EV/PV-only scenario bound to the local signals and profile.
    void write_ev_scenario(const std::string& file, const std::string& signals_file,
                           const std::string& profile_file, double noise_sigma, double p_lim = 0.0) const {
        std::string plim = p_lim > 0 ? "{ \"grid_elec\": " + std::to_string(p_lim) + " }" : "{}";
        write(file, R"({
  "schema_version": 1,
  "grid": { "start": "2018-11-05T00:00:00Z", "dt_minutes": 15, "steps": 96 },
  "subsystems": [
    {
      "id": "evpv",
      "weights": { "nrg": 1.0, "pen": 0.0, "slack": 0.0 },
      "supplies": [
        { "id": "grid", "store_connected": true,
          "conversions": [ { "resource": "grid_elec", "carrier": "elec", "eta": 1.0, "tech_min": 0.0, "tech_max": 400.0 } ] },
        { "id": "pv", "store_connected": true,
          "conversions": [ { "resource": "solar", "carrier": "elec", "eta": 1.0, "tech_min": 0.0, "tech_max": { "forecast": "pv" } } ] }
      ],
      "stores": [
        { "id": "ev_delay", "carrier": "elec", "soc_init": 0.0, "soc_min": -150.0, "soc_max": 0.0,
          "u_min": 0.0, "u_max": { "forecast": "ev_demand", "scale": 0.5 }, "v_min": 0.0, "v_max": 120.0,
          "beta": 0.0, "flush_soc_at_day_end": true }
      ],
      "demands": [
        { "type": "time_series", "id": "ev_chargers", "carrier": "elec", "dem": { "forecast": "ev_demand" } }
      ],
      "limits": {
        "p_max": { "grid_elec": 400.0 },
        "alpha": {
          "cost": { "grid_elec": { "signal": "price_elec", "scale": 2.5 }, "solar": 0.0 },
          "co2": { "grid_elec": { "signal": "co2_elec", "scale": 2.5 }, "solar": 0.0 }
        }
      },
      "plant": {
        "kind": "ev_pv", "n_vehicles": 300, "delayable_fraction": 0.5, "noise_sigma": )" +
                  std::to_string(noise_sigma) + R"(,
        "pv": { "capacity_kw": 270.0, "area_m2": 1500.0, "efficiency": 0.18, "tilt_deg": 30.0,
                "azimuth_deg": 0.0, "latitude_deg": 51.5 }
      },
      "forecast": { "ev_demand": { "kind": "cluster", "k": 2 }, "pv": { "kind": "mlp", "epochs": 60 } }
    }
  ],
  "p_lim": )" + plim + R"(,
  "signals": { "file": ")" + signals_file + R"(", "ev_profile": ")" + profile_file + R"(" }
})");
    }
};

}  // namespace sems_test
