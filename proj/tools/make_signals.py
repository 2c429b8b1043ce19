#!/usr/bin/env python3
"""Regenerate the checked-in synthetic signal files under data/signals/.

Deterministic by construction (fixed LCG seed); rerunning reproduces the
files byte for byte. Columns follow the signal-file contract documented in
docs/scenario-schema.md.
"""
import math
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "signals")
STEP_MIN = 15
SPD = 24 * 60 // STEP_MIN


class Lcg:
    def __init__(self, seed):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next(self):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
        return (self.state >> 11) / float(1 << 53)

    def uniform(self, lo, hi):
        return lo + (hi - lo) * self.next()


def days_from_civil(y, m, d):
    y -= m <= 2
    era = (y if y >= 0 else y - 399) // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


def iso(ts):
    days, rem = divmod(ts, 86400)
    z = days + 719468
    era = (z if z >= 0 else z - 146096) // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + (3 if mp < 10 else -9)
    y += m <= 2
    hh, r = divmod(rem, 3600)
    mm, ss = divmod(r, 60)
    return f"{y:04d}-{m:02d}-{d:02d}T{hh:02d}:{mm:02d}:{ss:02d}Z"


def day_of_year(ts):
    days = ts // 86400
    z = days + 719468
    era = (z if z >= 0 else z - 146096) // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + (3 if mp < 10 else -9)
    y += m <= 2
    return days - days_from_civil(y, 1, 1) + 1


def solar_sin_alt(ts, lat_deg=51.5):
    n = day_of_year(ts)
    decl = math.radians(23.45) * math.sin(2 * math.pi * (284 + n) / 365.0)
    hours = (ts % 86400) / 3600.0
    hour_angle = math.radians((hours - 12.0) * 15.0)
    lat = math.radians(lat_deg)
    return math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(hour_angle)


def price_elec(step_of_day, wiggle):
    hour = step_of_day * STEP_MIN / 60.0
    if hour < 6:
        base = 0.065
    elif hour < 16:
        base = 0.105
    elif hour < 20:
        base = 0.120
    else:
        base = 0.095
    return round(base + wiggle, 5)


def co2_elec(step_of_day, wiggle):
    hour = step_of_day * STEP_MIN / 60.0
    if 10 <= hour < 15:
        base = 0.09
    elif 17 <= hour < 21:
        base = 0.28
    else:
        base = 0.16
    return round(base + wiggle, 5)


def write_signals(path, start_ts, n_days, price_fn, co2_fn, t_amb_mean, rng):
    rows = ["timestamp,t_amb,dir_irr,dif_irr,price_elec,price_gas,co2_elec,co2_gas,t_source"]
    for d in range(n_days):
        weather = rng.uniform(0.25, 1.0)          # per-day cloudiness
        day_bias = rng.uniform(-2.5, 2.5)
        pw = rng.uniform(-0.008, 0.008)
        cw = rng.uniform(-0.02, 0.02)
        for s in range(SPD):
            ts = start_ts + (d * SPD + s) * STEP_MIN * 60
            hour = s * STEP_MIN / 60.0
            t_amb = t_amb_mean + day_bias + 3.5 * math.sin(2 * math.pi * (hour - 9.0) / 24.0)
            sa = max(0.0, solar_sin_alt(ts))
            dir_irr = 750.0 * (sa ** 1.2) * weather
            dif_irr = 140.0 * sa * (0.35 + 0.65 * (1.0 - weather))
            # prices move on the half hour
            half_hour_step = (s // 2) * 2
            rows.append(
                f"{iso(ts)},{t_amb:.3f},{dir_irr:.2f},{dif_irr:.2f},"
                f"{price_fn(half_hour_step, pw):.5f},0.03500,{co2_fn(half_hour_step, cw):.5f},0.18400,10.000"
            )
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {path}: {n_days} days")


def write_ev_profile(path):
    rows = ["step,kw"]
    for s in range(SPD):
        hour = s * STEP_MIN / 60.0
        if hour < 6:
            kw = 15.0
        elif hour < 7:
            kw = 30.0
        elif hour < 9.5:
            kw = 60.0                      # morning arrivals
        elif hour < 16:
            kw = 35.0
        elif hour < 20.5:
            kw = 90.0                      # evening peak
        else:
            kw = 25.0
        rows.append(f"{s},{kw:.1f}")
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {path}")


def main():
    os.makedirs(OUT, exist_ok=True)
    # main window: 2018-10-04 .. 2018-11-17 (44 days: warm-up + 14-day run + spill)
    start = days_from_civil(2018, 10, 4) * 86400
    write_signals(os.path.join(OUT, "signals_nov2018.csv"), start, 44, price_elec, co2_elec, 8.0, Lcg(20181104))

    # arbitrage study: deep overnight trough, flat carbon, mild weather
    def arb_price(step_of_day, wiggle):
        hour = step_of_day * STEP_MIN / 60.0
        return round((0.040 if hour < 6 else 0.130) + wiggle, 5)

    def arb_co2(step_of_day, wiggle):
        return round(0.15 + wiggle, 5)

    start_arb = days_from_civil(2018, 10, 27) * 86400
    write_signals(os.path.join(OUT, "signals_arbitrage.csv"), start_arb, 8, arb_price, arb_co2, 11.0, Lcg(7))

    write_ev_profile(os.path.join(OUT, "ev_base_profile.csv"))


if __name__ == "__main__":
    main()
