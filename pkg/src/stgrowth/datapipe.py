"""Ingestion of daily cumulative series, weekly aggregation, holdout, simulation.

Weekly blocks are calendar blocks: consecutive 7-day stretches counted from
January 1 of each year, so a window picks up the block containing its start
date and the block containing its end date, both possibly partial.  This is
the carving that yields 22 columns for the 2020-02-24..2020-07-19 window and
24 for 2020-07-20..2020-12-27.

Weekly new cases are differences of the cumulative series across block
boundaries.  Reporting corrections occasionally make the cumulative series dip;
the resulting negative weekly differences are clamped to zero with a warning,
and a region whose clamped total exceeds a small fraction of its window total
is rejected as non-monotone beyond tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import pandas as pd

from .gmrf import carar_prior_sample
from .graph import SpatialGraph
from .model import CountPanel, ModelSpec, ParamBlock, mean_matrix

__all__ = [
    "WAVE1",
    "WAVE2",
    "RawSeries",
    "HoldoutMask",
    "load_daily_csv",
    "aggregate_weekly",
    "standardize_panel",
    "make_holdout",
    "apply_holdout",
    "simulate_panel",
    "load_panel_csv",
    "write_panel_csv",
    "bundled_path",
]

# analysis windows: (first day, last day), inclusive
WAVE1 = ("2020-02-24", "2020-07-19")  # 22 weekly blocks
WAVE2 = ("2020-07-20", "2020-12-27")  # 24 weekly blocks

# clamped corrections above this fraction of a region's window total are fatal
CORRECTION_TOLERANCE = 0.02

MU_OVERFLOW = 1e12


@dataclass
class RawSeries:
    """One region's daily series: cumulative cases, daily new swabs, population."""

    region: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    cumulative: np.ndarray  # cumulative case counts, corrections allowed
    swabs: np.ndarray  # daily new swabs (nonnegative)
    population: float
    n_corrections: int = 0  # dips in the cumulative series, flagged not fatal

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.cumulative = np.asarray(self.cumulative, dtype=float)
        self.swabs = np.asarray(self.swabs, dtype=float)
        n = self.dates.size
        if self.cumulative.shape != (n,) or self.swabs.shape != (n,):
            raise ValueError(f"{self.region}: series lengths disagree")
        if n > 1 and np.any(np.diff(self.dates).astype(int) <= 0):
            raise ValueError(f"{self.region}: dates must be strictly increasing")
        if np.any(self.cumulative < 0) or np.any(self.swabs < 0):
            raise ValueError(f"{self.region}: negative counts")
        if self.population <= 0:
            raise ValueError(f"{self.region}: population must be positive")
        self.n_corrections = int(np.sum(np.diff(self.cumulative) < 0))


def _week_keys(dates: pd.DatetimeIndex) -> np.ndarray:
    """(year, block) key per date; blocks are 7-day runs from January 1."""
    return dates.year.values * 100 + (dates.dayofyear.values - 1) // 7


def load_daily_csv(path, population: dict[str, float] | None = None) -> list[RawSeries]:
    """Read a daily cumulative CSV using the public dataset's column names.

    Expects columns ``data`` (date), ``denominazione_regione`` (region name),
    ``totale_casi`` (cumulative cases), ``tamponi`` (cumulative swabs), and
    either a ``popolazione`` column or a region->population mapping.  Daily new
    swabs are first differences of ``tamponi`` clamped at zero.
    """
    df = pd.read_csv(path)
    needed = {"data", "denominazione_regione", "totale_casi", "tamponi"}
    missing = needed - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    if "popolazione" not in df.columns and population is None:
        raise ValueError(f"{path}: no popolazione column and no population mapping")
    df = df.assign(_date=pd.to_datetime(df["data"]).dt.normalize())
    out = []
    for region, grp in df.groupby("denominazione_regione", sort=True):
        grp = grp.sort_values("_date")
        if grp["_date"].duplicated().any():
            raise ValueError(f"{path}: duplicate dates for region {region!r}")
        if population is not None:
            if region not in population:
                raise ValueError(f"no population for region {region!r}")
            pop = float(population[region])
        else:
            pop_vals = grp["popolazione"].unique()
            if len(pop_vals) != 1:
                raise ValueError(f"{path}: population varies within region {region!r}")
            pop = float(pop_vals[0])
        tamponi = grp["tamponi"].to_numpy(dtype=float)
        daily_swabs = np.maximum(np.diff(tamponi, prepend=tamponi[:1]), 0.0)
        out.append(
            RawSeries(
                region=str(region),
                dates=grp["_date"].to_numpy().astype("datetime64[D]"),
                cumulative=grp["totale_casi"].to_numpy(dtype=float),
                swabs=daily_swabs,
                population=pop,
            )
        )
    return out


def aggregate_weekly(
    raw: list[RawSeries],
    window: tuple[str, str],
    correction_tolerance: float = CORRECTION_TOLERANCE,
    covariate: bool = True,
) -> CountPanel:
    """Aggregate daily series to a weekly panel over one analysis window.

    Weekly new cases difference the cumulative series at the last in-window day
    of consecutive blocks (the block before the window anchors the first
    difference).  Weekly swabs are sums of in-window daily swabs, standardized
    into the panel covariate unless ``covariate`` is false.
    """
    if not raw:
        raise ValueError("no series to aggregate")
    start, end = pd.Timestamp(window[0]), pd.Timestamp(window[1])
    if start > end:
        raise ValueError("window start after end")
    days = pd.date_range(start, end, freq="D")
    keys = _week_keys(days)
    week_keys = pd.unique(keys)
    t_n = week_keys.size
    key_pos = {k: i for i, k in enumerate(week_keys)}
    week_labels = [str(days[keys == k][0].date()) for k in week_keys]

    g_n = len(raw)
    y = np.zeros((g_n, t_n))
    swabs = np.zeros((g_n, t_n))
    offsets = np.empty(g_n)
    for gi, series in enumerate(raw):
        dates = pd.DatetimeIndex(series.dates)
        if dates.min() > start or dates.max() < end:
            raise ValueError(f"region {series.region!r} does not cover the window")
        inside = (dates >= start) & (dates <= end)
        d_in = dates[inside]
        cum_in = series.cumulative[inside]
        sw_in = series.swabs[inside]
        k_in = _week_keys(d_in)

        before = series.cumulative[dates < start]
        baseline = float(before[-1]) if before.size else 0.0
        # last in-window cumulative per block (dates are sorted)
        week_last = np.full(t_n, baseline)
        for k, c in zip(k_in, cum_in):
            week_last[key_pos[k]] = c
        weekly = np.diff(week_last, prepend=baseline)
        clamped = -weekly[weekly < 0].sum()
        if clamped > 0:
            warnings.warn(
                f"region {series.region!r}: clamped {clamped:.0f} cases of "
                "negative weekly differences to 0",
                RuntimeWarning,
            )
            total = max(week_last[-1] - baseline, 1.0)
            if clamped > correction_tolerance * total:
                raise ValueError(
                    f"region {series.region!r}: cumulative series non-monotone "
                    f"beyond tolerance ({clamped:.0f} vs total {total:.0f})"
                )
            weekly = np.maximum(weekly, 0.0)
        y[gi] = np.round(weekly)
        np.add.at(swabs[gi], [key_pos[k] for k in k_in], sw_in)
        offsets[gi] = np.log(series.population / 1e5)

    x = swabs[:, :, None] if covariate else None
    panel = CountPanel(
        y=y, offset_log=offsets, x=x,
        regions=[s.region for s in raw], weeks=week_labels,
    )
    return standardize_panel(panel) if covariate else panel


def standardize_panel(panel: CountPanel) -> CountPanel:
    """Center/scale covariates over all cells; a no-op once constants exist."""
    if panel.n_covariates == 0 or panel.x_center is not None:
        return panel
    center = panel.x.mean(axis=(0, 1))
    scale = panel.x.std(axis=(0, 1), ddof=1)
    if np.any(scale == 0):
        raise ValueError("constant covariate cannot be standardized")
    return replace(
        panel, x=(panel.x - center) / scale, x_center=center, x_scale=scale
    )


@dataclass(frozen=True)
class HoldoutMask:
    """Per-region held-out week indices (0-based), reproducible from the seed."""

    masked: tuple[tuple[int, ...], ...]
    seed: int
    fraction: float

    def bool_matrix(self, n_regions: int, n_times: int) -> np.ndarray:
        if len(self.masked) != n_regions:
            raise ValueError(f"mask has {len(self.masked)} regions, panel {n_regions}")
        out = np.zeros((n_regions, n_times), dtype=bool)
        for gi, weeks in enumerate(self.masked):
            for w in weeks:
                if not 0 <= w < n_times:
                    raise ValueError(f"masked week {w} outside 0..{n_times - 1}")
                out[gi, w] = True
        return out

    @property
    def n_masked(self) -> int:
        return sum(len(w) for w in self.masked)

    def to_dict(self) -> dict:
        return {
            "masked": [list(w) for w in self.masked],
            "seed": self.seed,
            "fraction": self.fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HoldoutMask":
        return cls(
            masked=tuple(tuple(int(w) for w in ws) for ws in d["masked"]),
            seed=int(d["seed"]),
            fraction=float(d["fraction"]),
        )


def make_holdout(panel: CountPanel, fraction: float = 0.15, seed: int = 0) -> HoldoutMask:
    """Mask round(fraction * T) uniformly chosen weeks in each region."""
    if not 0.0 < fraction < 0.5:
        raise ValueError("fraction must be in (0, 0.5)")
    t_n = panel.n_times
    k = int(round(fraction * t_n))
    if k == 0:
        raise ValueError(f"fraction {fraction} yields no masked weeks at T={t_n}")
    rng = np.random.default_rng(seed)
    masked = tuple(
        tuple(sorted(rng.choice(t_n, size=k, replace=False).tolist()))
        for _ in range(panel.n_regions)
    )
    return HoldoutMask(masked=masked, seed=seed, fraction=fraction)


def apply_holdout(panel: CountPanel, mask: HoldoutMask) -> CountPanel:
    """Panel copy whose masked cells are excluded from the likelihood."""
    drop = mask.bool_matrix(panel.n_regions, panel.n_times)
    return panel.with_mask(panel.observed & ~drop)


def simulate_panel(
    true_params: ParamBlock,
    spec: ModelSpec,
    graph: SpatialGraph,
    rng: np.random.Generator,
    offset_log: np.ndarray | None = None,
    x: np.ndarray | None = None,
    phi: np.ndarray | None = None,
) -> CountPanel:
    """Draw a synthetic panel from the generative model.

    The random-effect field is drawn from the CAR-AR prior (pass ``phi`` to
    pin it instead, e.g. zeros); the drawn/pinned field and the parameters are
    attached to the returned panel for recovery checks.
    """
    g_n, t_n = spec.n_regions, spec.n_times
    if offset_log is None:
        offset_log = np.zeros(g_n)
    car = true_params.car
    if phi is None:
        phi = carar_prior_sample(rng, car.rho, car.tau, car.alpha, graph, t_n)
    else:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (t_n, g_n):
            raise ValueError(f"phi must have shape ({t_n}, {g_n})")
    params = replace(true_params, car=replace(car, phi=phi))
    panel = CountPanel(
        y=np.zeros((g_n, t_n)), offset_log=offset_log, x=x,
        x_center=np.zeros(spec.n_covariates) if x is not None else None,
        x_scale=np.ones(spec.n_covariates) if x is not None else None,
    )
    mu = mean_matrix(params, panel, spec)
    if np.any(mu > MU_OVERFLOW):
        raise ValueError(
            f"simulated means overflow (max {mu.max():.3g} > {MU_OVERFLOW:.0e})"
        )
    panel.y = rng.poisson(mu).astype(float)
    panel.phi_true = phi
    panel.params_true = params
    return panel


def write_panel_csv(panel: CountPanel, path) -> None:
    """Write ``region,week,count,population,swabs`` rows, one per cell.

    Covariates are written back on their raw scale when standardization
    constants are stored; panels without covariates get a zero swabs column.
    """
    if panel.n_covariates > 1:
        raise ValueError("panel CSV holds at most one covariate column")
    if panel.n_covariates == 1:
        raw_x = panel.x[:, :, 0]
        if panel.x_center is not None:
            raw_x = raw_x * panel.x_scale[0] + panel.x_center[0]
    else:
        raw_x = np.zeros_like(panel.y)
    pop = 1e5 * np.exp(panel.offset_log)
    rows = []
    for gi, region in enumerate(panel.regions):
        for ti, week in enumerate(panel.weeks):
            rows.append(
                (region, week, int(panel.y[gi, ti]), pop[gi], raw_x[gi, ti])
            )
    pd.DataFrame(
        rows, columns=["region", "week", "count", "population", "swabs"]
    ).to_csv(path, index=False)


def load_panel_csv(path) -> CountPanel:
    """Read a ``region,week,count,population,swabs`` panel CSV.

    Regions and weeks keep their first-appearance order; every region must
    carry the identical week set.  A missing or constant swabs column yields a
    covariate-free panel; otherwise swabs are standardized with fresh
    constants.
    """
    df = pd.read_csv(path)
    needed = {"region", "week", "count", "population"}
    missing = needed - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    regions = list(pd.unique(df["region"].astype(str)))
    weeks = list(pd.unique(df["week"]))
    g_n, t_n = len(regions), len(weeks)
    if len(df) != g_n * t_n:
        raise ValueError(f"{path}: expected {g_n * t_n} rows, found {len(df)}")
    r_pos = {r: i for i, r in enumerate(regions)}
    w_pos = {w: i for i, w in enumerate(weeks)}
    y = np.full((g_n, t_n), -1.0)
    swabs = np.zeros((g_n, t_n))
    pop = np.full(g_n, np.nan)
    has_swabs = "swabs" in df.columns
    for row in df.itertuples(index=False):
        gi = r_pos[str(row.region)]
        if row.week not in w_pos:
            raise ValueError(f"{path}: inconsistent week sets across regions")
        ti = w_pos[row.week]
        if y[gi, ti] >= 0:
            raise ValueError(f"{path}: duplicate cell ({row.region}, {row.week})")
        y[gi, ti] = row.count
        if has_swabs:
            swabs[gi, ti] = row.swabs
        if np.isnan(pop[gi]):
            pop[gi] = row.population
        elif pop[gi] != row.population:
            raise ValueError(f"{path}: population varies within region {row.region!r}")
    if np.any(y < 0):
        raise ValueError(f"{path}: inconsistent week sets across regions")
    x = None
    if has_swabs and np.std(swabs) > 0:
        x = swabs[:, :, None]
    panel = CountPanel(
        y=y, offset_log=np.log(pop / 1e5), x=x, regions=regions, weeks=weeks
    )
    return standardize_panel(panel)


def bundled_path(name: str) -> str:
    """Filesystem path of a data file shipped inside the package."""
    p = resources.files("stgrowth").joinpath("data", name)
    if not p.is_file():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return str(p)
