"""Generate the bundled demo CSVs under src/stgrowth/data/.

The daily snapshot mimics the public Italian regional feed's schema (columns
``data, denominazione_regione, totale_casi, tamponi, popolazione``) with the
20 statistical regions (autonomous provinces merged into Trentino-Alto Adige),
realistic populations, and land-border adjacency — but the case and swab
series are SYNTHETIC, drawn from seeded two-wave intensity curves modulated by
a seeded spatio-temporal random field over the border graph.  No real
surveillance numbers are redistributed.

Run from the repository root after installing the package:

    python scripts/make_demo_data.py
"""

from pathlib import Path

import numpy as np
import pandas as pd

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "stgrowth" / "data"

# (region, population, first-wave intensity, second-wave intensity);
# intensities are per-100k scales, first wave concentrated in the north
REGIONS = [
    ("Abruzzo", 1293941, 0.25, 1.03),
    ("Basilicata", 553254, 0.08, 0.94),
    ("Calabria", 1894110, 0.07, 0.91),
    ("Campania", 5712143, 0.12, 1.15),
    ("Emilia-Romagna", 4464119, 1.05, 1.03),
    ("Friuli Venezia Giulia", 1206216, 0.45, 1.06),
    ("Lazio", 5755700, 0.18, 1.00),
    ("Liguria", 1524826, 0.95, 1.03),
    ("Lombardia", 10027602, 1.45, 1.09),
    ("Marche", 1512672, 0.75, 0.97),
    ("Molise", 300516, 0.10, 0.91),
    ("Piemonte", 4311217, 1.10, 1.09),
    ("Puglia", 3953305, 0.15, 1.00),
    ("Sardegna", 1611621, 0.10, 0.91),
    ("Sicilia", 4875290, 0.10, 0.97),
    ("Toscana", 3692555, 0.40, 1.06),
    ("Trentino-Alto Adige", 1078069, 0.85, 1.06),
    ("Umbria", 870165, 0.25, 0.97),
    ("Valle d'Aosta", 125034, 1.20, 1.00),
    ("Veneto", 4879133, 0.75, 1.12),
]

# land borders between regions (islands Sicilia/Sardegna stay isolated)
BORDERS = [
    ("Piemonte", "Valle d'Aosta"),
    ("Piemonte", "Lombardia"),
    ("Piemonte", "Emilia-Romagna"),
    ("Piemonte", "Liguria"),
    ("Lombardia", "Trentino-Alto Adige"),
    ("Lombardia", "Veneto"),
    ("Lombardia", "Emilia-Romagna"),
    ("Trentino-Alto Adige", "Veneto"),
    ("Veneto", "Friuli Venezia Giulia"),
    ("Veneto", "Emilia-Romagna"),
    ("Liguria", "Emilia-Romagna"),
    ("Liguria", "Toscana"),
    ("Emilia-Romagna", "Toscana"),
    ("Emilia-Romagna", "Marche"),
    ("Toscana", "Marche"),
    ("Toscana", "Umbria"),
    ("Toscana", "Lazio"),
    ("Umbria", "Marche"),
    ("Umbria", "Lazio"),
    ("Marche", "Lazio"),
    ("Marche", "Abruzzo"),
    ("Lazio", "Abruzzo"),
    ("Lazio", "Molise"),
    ("Lazio", "Campania"),
    ("Abruzzo", "Molise"),
    ("Molise", "Campania"),
    ("Molise", "Puglia"),
    ("Campania", "Puglia"),
    ("Campania", "Basilicata"),
    ("Puglia", "Basilicata"),
    ("Basilicata", "Calabria"),
]


def _bump(t, peak, width, height):
    return height * np.exp(-0.5 * ((t - peak) / width) ** 2)


# second-wave weekly curve parameters (baseline slope, logistic size, growth
# rate, peak-location parameter, early-peak asymmetry) in panel-week units;
# the realized count peak of this family sits at p + ln(s)/h ~ week 20.9
W2_CURVE = dict(b=0.0, r=5400.0, h=0.6, p=23.2, s=0.25)


def _wave2_weekly():
    """Second-wave weekly intensity per 100k on Jan-1-anchored week blocks.

    Drawn from the package's own generalized-logistic weekly-increment family
    so fits of the bundled second-wave panel can recover the curve parameters;
    week block i (0-based day-of-year // 7) maps to panel week i - 27.
    """
    from stgrowth.richards import RichardsParams, richards_diff

    weeks = np.arange(53, dtype=float) - 27.0
    return richards_diff(RichardsParams(**W2_CURVE), weeks)


def _border_weights():
    names = [r[0] for r in REGIONS]
    idx = {n: i for i, n in enumerate(names)}
    w = np.zeros((len(names), len(names)))
    for a, b in BORDERS:
        w[idx[a], idx[b]] = w[idx[b], idx[a]] = 1.0
    return names, w


def _weekly_field():
    """Seeded CAR-AR field on Jan-1-anchored week blocks, one row per week.

    Gives the synthetic counts genuine spatio-temporal dependence (spatial
    0.85 on the border graph, temporal 0.85, innovation precision 18) instead
    of independent Poisson noise around the smooth waves.
    """
    from stgrowth.gmrf import carar_prior_sample
    from stgrowth.graph import from_dense

    _, w = _border_weights()
    rng = np.random.default_rng(20201220)
    return carar_prior_sample(rng, 0.85, 18.0, 0.85, from_dense(w), 53)


def make_daily():
    rng = np.random.default_rng(20200224)
    days = pd.date_range("2020-02-24", "2020-12-27", freq="D")
    t = np.arange(len(days), dtype=float)
    week_block = (days.dayofyear.to_numpy() - 1) // 7
    u = _weekly_field()
    wave2_daily = _wave2_weekly()[week_block] / 7.0
    rows = []
    for gi, (region, pop, w1, w2) in enumerate(REGIONS):
        e = pop / 1e5
        # two seeded waves of daily intensity per 100k, field-modulated,
        # plus a small floor; the first wave is a plain bump, the second
        # follows the fit family with a late-November peak
        shape = w1 * _bump(t, 40, 16, 48) + w2 * wave2_daily
        mean = e * (shape * np.exp(u[week_block, gi]) + 0.15)
        daily_cases = rng.poisson(mean)
        cumulative = np.cumsum(daily_cases)
        # swab capacity ramps up over the year
        swab_mean = e * (25.0 + 0.45 * t + 18.0 * (t > 180))
        daily_swabs = rng.poisson(swab_mean)
        tamponi = np.cumsum(daily_swabs)
        for d, c, s in zip(days, cumulative, tamponi):
            rows.append((d.strftime("%Y-%m-%dT17:00:00"), region, int(c), int(s), pop))
    df = pd.DataFrame(
        rows, columns=["data", "denominazione_regione", "totale_casi", "tamponi",
                       "popolazione"]
    )
    df.to_csv(DATA_DIR / "italy_daily_synthetic.csv", index=False)
    return df


def make_borders():
    names, w = _border_weights()
    pd.DataFrame(w, columns=names).to_csv(DATA_DIR / "italy_borders.csv", index=False)


def make_toy():
    import stgrowth as sg

    g_n, t_n = 5, 12
    graph = sg.ring_graph(g_n)
    gamma = sg.RichardsParams(b=0.3, r=60.0, h=0.8, p=5.0, s=1.4)
    car = sg.CarArState(phi=np.zeros((t_n, g_n)), alpha=0.6, rho=0.7, tau=6.0)
    params = sg.ParamBlock(gamma=[gamma], beta=np.zeros(0), car=car)
    spec = sg.ModelSpec(n_regions=g_n, n_times=t_n)
    rng = np.random.default_rng(7)
    panel = sg.simulate_panel(params, spec, graph, rng,
                              offset_log=np.log(rng.uniform(0.5, 3.0, g_n)))
    sg.write_panel_csv(panel, DATA_DIR / "toy_panel.csv")
    sg.write_graph_csv(graph, DATA_DIR / "toy_graph.csv",
                       names=list(panel.regions))


if __name__ == "__main__":
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    make_daily()
    make_borders()
    make_toy()
    for f in sorted(DATA_DIR.iterdir()):
        print(f"{f.name}: {f.stat().st_size} bytes")
