#!/usr/bin/env python3
"""Generates the vendored synthetic daily dataset (data/who_daily.csv).

Six regions of WHO-style daily case/death counts are drawn from a known
multi-peak Gompertz-rate truth: cases are sums of Gompertz-derivative peaks
over a linear background; deaths convolve the same peaks with a shared gamma
delay kernel (alpha = 8.0, beta = 0.51) plus their own background.

The noise model mirrors what the weekly aggregation assumes: a fixed
within-week day-of-week pattern sets the sample standard deviation, and an
independent weekly offset perturbs the weekly mean with sigma equal to that
week's (deterministic) sample sd divided by sqrt(7) -- so the weekly
chi-square is calibrated to ~1 per point by construction. Counts are rounded
to integers and clamped at zero.

Deterministic: fixed RNG seed, fixed output ordering.
"""

import csv
import datetime as dt
import math
import pathlib
import sys

import numpy as np
from scipy import stats
from scipy.integrate import quad

ALPHA, BETA = 8.0, 0.51
FIRST_DAY = dt.date(2021, 11, 23)
LAST_DAY = dt.date(2022, 4, 25)
SEED = int(sys.argv[1]) if len(sys.argv) > 1 else 2

# day-of-week pattern: zero mean, zero linear trend, unit sample sd
PATTERN = np.array([0.55, -1.25, 0.30, 1.45, -0.70, -0.95, 0.60])
PATTERN -= PATTERN.mean()
j = np.arange(7) - 3.0
PATTERN -= j * (PATTERN @ j) / (j @ j)
PATTERN /= PATTERN.std(ddof=1)

# (N, lambda, t0) per peak; t0 in days from the region's start date.
# death_norms pair with the leading peaks; backgrounds are (C, S).
REGIONS = [
    dict(
        code="US",
        start=dt.date(2021, 11, 23),
        peaks=[(22.0e6, 0.0863, 49.70)],
        bg_cases=(105_000.0, -600.0),
        death_norms=[6.5e4],
        bg_deaths=(1620.0, -8.2),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
    dict(
        code="IN",
        start=dt.date(2021, 12, 7),
        peaks=[(7.68e6, 0.1147, 47.85)],
        bg_cases=(9_300.0, -60.0),
        death_norms=[1.78e4],
        bg_deaths=(398.0, -2.7),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
    dict(
        code="BR",
        start=dt.date(2021, 11, 30),
        peaks=[(6.70e6, 0.0660, 65.53)],
        bg_cases=(3_000.0, 85.0),
        death_norms=[3.30e4],
        bg_deaths=(127.0, -0.37),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
    dict(
        code="FR",
        start=dt.date(2021, 11, 30),
        peaks=[(11.9e6, 0.0675, 52.8), (6.26e6, 0.057, 128.8)],
        bg_cases=(52_300.0, -480.0),
        death_norms=[6.8e3, 2.8e3],
        bg_deaths=(190.0, -0.91),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
    dict(
        code="DE",
        start=dt.date(2021, 12, 7),
        peaks=[(12.56e6, 0.0396, 71.3), (5.85e6, 0.066, 113.6)],
        bg_cases=(59_300.0, -1050.0),
        death_norms=[1.62e4],
        bg_deaths=(186.0, -1.7),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
    dict(
        # third listed peak is the inter-wave shoulder; it carries no deaths
        code="GB",
        start=dt.date(2021, 11, 30),
        peaks=[(3.86e6, 0.0803, 36.26), (2.35e6, 0.0784, 114.57), (0.88e6, 0.113, 65.2)],
        bg_cases=(53_100.0, -329.0),
        death_norms=[6.3e3, 4.8e3],
        bg_deaths=(105.0, 0.244),
        noise_cases=0.030,
        noise_deaths=0.050,
    ),
]


def gompertz(t, t0, lam):
    x = -lam * (t - t0)
    ex = math.exp(x) if x < 700 else float("inf")
    if ex > 700:
        return 0.0
    return lam * math.exp(-ex) * math.exp(x)


def cases_curve(region, t):
    c, s = region["bg_cases"]
    total = c + s * t
    for n, lam, t0 in region["peaks"]:
        total += n * gompertz(t, t0, lam)
    return total


def death_shape(t, t0, lam):
    """Convolution of one unit peak with the gamma delay kernel."""
    if t <= -120.0:
        return 0.0

    def integrand(tau):
        return gompertz(tau, t0, lam) * stats.gamma.pdf(t - tau, ALPHA, scale=1.0 / BETA)

    val, _ = quad(integrand, t - 120.0, t, limit=200)
    return val


def deaths_curve(region, t):
    c, s = region["bg_deaths"]
    total = c + s * t
    for nd, (n, lam, t0) in zip(region["death_norms"], region["peaks"]):
        total += nd * death_shape(t, t0, lam)
    return total


def main():
    rng = np.random.default_rng(SEED)
    n_days = (LAST_DAY - FIRST_DAY).days + 1
    rows = {}  # date -> {code: (cases, deaths)}

    for region in REGIONS:
        code = region["code"]
        start = region["start"]
        # day index relative to the region's own start
        offs = (start - FIRST_DAY).days
        cases_truth = np.array([cases_curve(region, d - offs) for d in range(n_days)])
        deaths_truth = np.array([deaths_curve(region, d - offs) for d in range(n_days)])
        assert (cases_truth[offs:] > 0).all(), f"{code}: cases truth not positive"
        assert (deaths_truth[offs:] > 0).all(), f"{code}: deaths truth not positive"

        cases_out = np.empty(n_days)
        deaths_out = np.empty(n_days)
        # weeks are aligned to the region's start so the sampled pattern
        # matches the aggregation blocks (deaths start 14 days later: same phase)
        for w0 in range(offs % 7 - 7, n_days, 7):
            lo, hi = max(w0, 0), min(w0 + 7, n_days)
            if hi <= lo:
                continue
            sl = slice(lo, hi)
            pat = PATTERN[lo - w0 : hi - w0]
            ct = cases_truth[sl]
            dtt = deaths_truth[sl]
            level_c = max(ct.mean(), 0.0)
            level_d = max(dtt.mean(), 0.0)
            day_c = ct + region["noise_cases"] * level_c * pat
            day_d = dtt + region["noise_deaths"] * level_d * pat
            # weekly-mean offset sigma = within-week sample sd / sqrt(7), the
            # exact standard error the weekly aggregation assigns to the point
            se_c = day_c.std(ddof=1) / math.sqrt(7) if len(day_c) > 1 else 0.0
            se_d = day_d.std(ddof=1) / math.sqrt(7) if len(day_d) > 1 else 0.0
            cases_out[sl] = day_c + rng.normal(0.0, se_c)
            deaths_out[sl] = day_d + rng.normal(0.0, se_d)

        cases_out = np.clip(np.rint(cases_out), 0, None).astype(int)
        deaths_out = np.clip(np.rint(deaths_out), 0, None).astype(int)
        for d in range(n_days):
            date = FIRST_DAY + dt.timedelta(days=d)
            rows.setdefault(date, {})[code] = (cases_out[d], deaths_out[d])

    out_path = pathlib.Path(__file__).resolve().parent.parent / "data" / "who_daily.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Date_reported", "Country_code", "New_cases", "New_deaths"])
        for date in sorted(rows):
            for region in REGIONS:
                code = region["code"]
                cases, deaths = rows[date][code]
                writer.writerow([date.isoformat(), code, cases, deaths])
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
