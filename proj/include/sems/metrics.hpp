#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "sems/core.hpp"

namespace sems {

/// Normalised mean bias error, percent: sum(measured - simulated) / (n * mean(measured)).
inline double nmbe_pct(const Series& measured, const Series& simulated) {
    if (measured.size() != simulated.size() || measured.empty())
        throw std::invalid_argument("nmbe_pct: series must align and be non-empty");
    double bias = 0.0, mean = 0.0;
    for (size_t i = 0; i < measured.size(); ++i) {
        bias += measured[i] - simulated[i];
        mean += measured[i];
    }
    mean /= measured.size();
    if (mean == 0.0) throw std::invalid_argument("nmbe_pct: measured mean is zero");
    return 100.0 * bias / (static_cast<double>(measured.size()) * mean);
}

/// Coefficient of variation of the RMSE, percent.
inline double cvrmse_pct(const Series& measured, const Series& simulated) {
    if (measured.size() != simulated.size() || measured.empty())
        throw std::invalid_argument("cvrmse_pct: series must align and be non-empty");
    double sq = 0.0, mean = 0.0;
    for (size_t i = 0; i < measured.size(); ++i) {
        const double d = measured[i] - simulated[i];
        sq += d * d;
        mean += measured[i];
    }
    mean /= measured.size();
    if (mean == 0.0) throw std::invalid_argument("cvrmse_pct: measured mean is zero");
    return 100.0 * std::sqrt(sq / measured.size()) / mean;
}

struct MetricsReport {
    double total_cost_gbp = 0.0;
    double total_co2_kg = 0.0;
    std::map<std::string, double> cost_by_subsystem;   // GBP
    std::map<std::string, double> co2_by_subsystem;    // kg
    std::map<std::string, double> supply_mix_kwh;      // delivered energy per technology
    double pv_generated_kwh = 0.0;
    double pv_to_ev_kwh = 0.0;
    double ev_served_kwh = 0.0;
    double pv_utilisation_pct = 0.0;   // PV-to-EV energy / PV generated
    double pv_contribution_pct = 0.0;  // PV-to-EV energy / EV consumption
    Series violation_kw;               // per sample, against the district limit
    double violation_sum_kwh = 0.0;
    double comfort_max_dev_c = 0.0;    // worst band violation of the tracked output
    double comfort_mean_dev_c = 0.0;
    std::map<std::string, double> forecast_mae;  // per forecast channel
    double heat_forecast_nmbe_pct = 0.0;
    double heat_forecast_cvrmse_pct = 0.0;
    int samples = 0;
    double runtime_seconds = 0.0;
    int coordination_rounds = 0;

    std::string summary() const {
        char buf[256];
        std::string out;
        auto line = [&](const char* fmt, auto... args) {
            std::snprintf(buf, sizeof buf, fmt, args...);
            out += buf;
            out += "\n";
        };
        line("samples                %d", samples);
        line("total cost            %12.2f GBP", total_cost_gbp);
        line("total co2             %12.2f kg", total_co2_kg);
        for (const auto& [k, v] : cost_by_subsystem) line("  cost %-16s %10.2f GBP", k.c_str(), v);
        for (const auto& [k, v] : co2_by_subsystem) line("  co2  %-16s %10.2f kg", k.c_str(), v);
        for (const auto& [k, v] : supply_mix_kwh) line("  mix  %-16s %10.1f kWh", k.c_str(), v);
        line("pv generated          %12.1f kWh", pv_generated_kwh);
        line("pv utilisation        %12.1f %%", pv_utilisation_pct);
        line("pv contribution       %12.1f %%", pv_contribution_pct);
        line("violation sum         %12.3f kWh", violation_sum_kwh);
        line("comfort max deviation %12.3f degC", comfort_max_dev_c);
        line("comfort mean dev      %12.4f degC", comfort_mean_dev_c);
        for (const auto& [k, v] : forecast_mae) line("  mae  %-16s %10.3f kW", k.c_str(), v);
        line("heat forecast NMBE    %12.2f %%", heat_forecast_nmbe_pct);
        line("heat forecast CVRMSE  %12.2f %%", heat_forecast_cvrmse_pct);
        line("coordination rounds   %d", coordination_rounds);
        line("runtime               %12.2f s", runtime_seconds);
        return out;
    }
};

}  // namespace sems
