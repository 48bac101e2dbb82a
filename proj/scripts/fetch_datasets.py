#!/usr/bin/env python3
"""Fetches the reference time series used by the examples and the
extrapolation benchmarks into data/.

  airline.csv   monthly international airline passengers, 1949-1960
                (Box & Jenkins 1976, public domain; 144 monthly totals,
                inlined below)
  mauna_loa_co2.csv
                weekly Mauna Loa atmospheric CO2 from the statsmodels
                bundled copy of the Scripps/NOAA record, as (decimal year,
                ppm) with missing weeks dropped
  solar.csv     annual reconstructed total solar irradiance (Lean 1995/2004
                update), downloaded from NOAA paleoclimatology; skipped with
                a notice when the host is unreachable

Run from the repository root:  python3 scripts/fetch_datasets.py
"""

import os
import sys

OUT = os.path.join(os.path.dirname(__file__), "..", "data")

# Box & Jenkins (1976) Series G, in thousands of passengers per month.
AIRLINE = [
    112, 118, 132, 129, 121, 135, 148, 148, 136, 119, 104, 118,
    115, 126, 141, 135, 125, 149, 170, 170, 158, 133, 114, 140,
    145, 150, 178, 163, 172, 178, 199, 199, 184, 162, 146, 166,
    171, 180, 193, 181, 183, 218, 230, 242, 209, 191, 172, 194,
    196, 196, 236, 235, 229, 243, 264, 272, 237, 211, 180, 201,
    204, 188, 235, 227, 234, 264, 302, 293, 259, 229, 203, 229,
    242, 233, 267, 269, 270, 315, 364, 347, 312, 274, 237, 278,
    284, 277, 317, 313, 318, 374, 413, 405, 355, 306, 271, 306,
    315, 301, 356, 348, 355, 422, 465, 467, 404, 347, 305, 336,
    340, 318, 362, 348, 363, 435, 491, 505, 404, 359, 310, 337,
    360, 342, 406, 396, 420, 472, 548, 559, 463, 407, 362, 405,
    417, 391, 419, 461, 472, 535, 622, 606, 508, 461, 390, 432,
]


def write_airline():
    path = os.path.join(OUT, "airline.csv")
    with open(path, "w") as f:
        f.write("t,passengers\n")
        for i, v in enumerate(AIRLINE):
            f.write(f"{1949 + i / 12.0:.6f},{v}\n")
    print(f"wrote {path} ({len(AIRLINE)} rows)")


def write_co2():
    path = os.path.join(OUT, "mauna_loa_co2.csv")
    try:
        import statsmodels.api as sm
    except ImportError:
        print("statsmodels not installed; skipping mauna_loa_co2.csv")
        return
    data = sm.datasets.co2.load_pandas().data.dropna()
    with open(path, "w") as f:
        f.write("t,co2\n")
        for ts, ppm in data["co2"].items():
            year = ts.year + (ts.dayofyear - 1) / 365.25
            f.write(f"{year:.6f},{ppm}\n")
    print(f"wrote {path} ({len(data)} rows)")


def write_solar():
    path = os.path.join(OUT, "solar.csv")
    url = ("https://www.ncei.noaa.gov/pub/data/paleo/climate_forcing/"
           "solar_variability/lean2000_irradiance.txt")
    try:
        import urllib.request
        with urllib.request.urlopen(url, timeout=30) as r:
            text = r.read().decode("utf-8", "replace")
    except Exception as e:  # no network, moved file, ...
        print(f"solar irradiance download failed ({e}); skipping solar.csv")
        return
    rows = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) >= 2:
            try:
                year, tsi = float(parts[0]), float(parts[1])
            except ValueError:
                continue
            if 1500 < year < 2100 and 1300 < tsi < 1400:
                rows.append((year, tsi))
    if not rows:
        print("solar irradiance file had no parseable rows; skipping")
        return
    with open(path, "w") as f:
        f.write("t,irradiance\n")
        for year, tsi in rows:
            f.write(f"{year},{tsi}\n")
    print(f"wrote {path} ({len(rows)} rows)")


def main():
    os.makedirs(OUT, exist_ok=True)
    write_airline()
    write_co2()
    write_solar()
    return 0


if __name__ == "__main__":
    sys.exit(main())
