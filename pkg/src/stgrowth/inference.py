"""Posterior summaries, convergence diagnostics, prediction, and model scores.

Diagnostics follow the split-chain conventions: R-hat compares within- and
between-half-chain variances, bulk ESS rank-normalizes the draws and applies
Geyer's initial-monotone truncation to paired autocorrelations.  Predictive
intervals are equal-tailed sample quantiles with linear (type-7)
interpolation.  WAIC and LOO are computed from the per-cell log likelihood of
retained draws; LOO importance ratios are Pareto-smoothed whenever the tail is
large enough to fit, otherwise plain importance sampling is used.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp, ndtri
from scipy.stats import rankdata

from . import model as model_mod
from .graph import SpatialGraph
from .model import CountPanel, ModelSpec, ParamLayout, PosteriorEvaluator
from .sampler import NutsConfig, PosteriorDraws, nuts_sample

__all__ = [
    "split_rhat",
    "bulk_ess",
    "rank_normalize",
    "summarize_chains",
    "PredictiveDraws",
    "posterior_predictive",
    "predictive_from_constrained",
    "coverage_piw_rmse",
    "waic",
    "loo",
    "psis_smooth",
    "FitResult",
    "fit_model",
    "summary_records",
]

# PSIS needs a real tail: below these sizes fall back to plain IS
PSIS_MIN_DRAWS = 25
PSIS_MIN_TAIL = 5


def _split_chains(chains: np.ndarray) -> np.ndarray:
    """(C, N) -> (2C, N//2); drops the middle draw of odd-length chains."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1]
    half = n // 2
    return np.vstack([chains[:, :half], chains[:, n - half:]])


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    chains: (n_chains, n_draws).  Returns NaN (with a warning) for chains
    without variance, where the statistic is undefined.
    """
    x = _split_chains(chains)
    m, n = x.shape
    if n < 2:
        return float("nan")
    within = float(np.mean(np.var(x, axis=1, ddof=1)))
    between_over_n = float(np.var(np.mean(x, axis=1), ddof=1)) if m > 1 else 0.0
    if within == 0.0:
        warnings.warn("split_rhat undefined for constant chains", RuntimeWarning)
        return float("nan")
    var_plus = (n - 1) / n * within + between_over_n
    return float(np.sqrt(var_plus / within))


def rank_normalize(chains: np.ndarray) -> np.ndarray:
    """Fractional ranks over all draws mapped through the normal quantile."""
    chains = np.asarray(chains, dtype=float)
    flat = chains.reshape(-1)
    ranks = rankdata(flat, method="average")
    z = ndtri((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance of one sequence via FFT."""
    n = x.size
    xc = x - x.mean()
    m = 1
    while m < 2 * n:
        m *= 2
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    return acov


def bulk_ess(chains: np.ndarray) -> float:
    """Rank-normalized bulk effective sample size of (n_chains, n_draws)."""
    z = _split_chains(rank_normalize(chains))
    m, n = z.shape
    if n < 4:
        return float("nan")
    acov = np.stack([_autocov(row) for row in z])
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = float(np.mean(chain_var))
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += float(np.var(np.mean(z, axis=1), ddof=1))
    if var_plus == 0.0:
        warnings.warn("bulk_ess undefined for constant chains", RuntimeWarning)
        return float("nan")

    rho = 1.0 - (mean_var - np.mean(acov, axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum consecutive pairs while positive, enforce monotone decrease
    max_pairs = (n - 1) // 2
    pair_sums = []
    for k in range(max_pairs):
        s = rho[2 * k] + rho[2 * k + 1]
        if s < 0:
            break
        if pair_sums and s > pair_sums[-1]:
            s = pair_sums[-1]
        pair_sums.append(s)
    tau = max(-1.0 + 2.0 * float(np.sum(pair_sums)), 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)


def summarize_chains(chains: np.ndarray) -> dict[str, float]:
    """Stats for one parameter given (n_chains, n_draws) of constrained draws."""
    flat = np.asarray(chains, dtype=float).reshape(-1)
    q = np.percentile(flat, [2.5, 50.0, 97.5])
    return {
        "mean": float(np.mean(flat)),
        "sd": float(np.std(flat, ddof=1)) if flat.size > 1 else 0.0,
        "q2.5": float(q[0]),
        "median": float(q[1]),
        "q97.5": float(q[2]),
        "rhat": split_rhat(chains),
        "ess_bulk": bulk_ess(chains),
    }


@dataclass
class PredictiveDraws:
    """Posterior predictive counts and their Poisson means.

    counts: (S, G, T) simulated counts (nonnegative integers)
    mu: (S, G, T) Poisson means per draw
    """

    counts: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        if self.counts.shape != self.mu.shape:
            raise ValueError("counts and mu must have matching shapes")
        if np.any(self.counts < 0):
            raise ValueError("predictive counts must be nonnegative")

    @property
    def n_draws(self) -> int:
        return self.counts.shape[0]

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Equal-tailed (lo, hi) count quantiles per cell, type-7 interpolation."""
        tail = 100.0 * (1.0 - level) / 2.0
        lo = np.percentile(self.counts, tail, axis=0)
        hi = np.percentile(self.counts, 100.0 - tail, axis=0)
        return lo, hi

    def mean_counts(self) -> np.ndarray:
        return self.counts.mean(axis=0)


def predictive_from_constrained(
    cd: dict[str, np.ndarray],
    panel: CountPanel,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> PredictiveDraws:
    """Simulate counts for every cell from a constrained draw dictionary."""
    mu = model_mod.mu_from_draws(cd, panel, spec)
    counts = rng.poisson(mu).astype(np.int64)
    return PredictiveDraws(counts=counts, mu=mu)


def posterior_predictive(
    u_draws: np.ndarray,
    panel: CountPanel,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> PredictiveDraws:
    """Simulate counts for every cell from (S, dim) unconstrained draws."""
    cd = model_mod.constrain_draws(np.asarray(u_draws, dtype=float), spec)
    return predictive_from_constrained(cd, panel, spec, rng)


def coverage_piw_rmse(
    pred: PredictiveDraws,
    truth: CountPanel,
    mask: np.ndarray,
    level: float = 0.95,
) -> tuple[float, float, float]:
    """Holdout metrics over the cells selected by ``mask``.

    coverage: fraction of true counts inside the equal-tailed predictive
    interval; piw: mean interval width; rmse: root mean squared error of the
    predictive mean.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != truth.y.shape:
        raise ValueError("mask shape must match the panel")
    if not mask.any():
        raise ValueError("mask selects no cells")
    lo, hi = pred.interval(level)
    y = truth.y
    inside = (y[mask] >= lo[mask]) & (y[mask] <= hi[mask])
    coverage = float(np.mean(inside))
    piw = float(np.mean(hi[mask] - lo[mask]))
    mean_pred = pred.mu.mean(axis=0)
    rmse = float(np.sqrt(np.mean((mean_pred[mask] - y[mask]) ** 2)))
    return coverage, piw, rmse


def waic(loglik_draws: np.ndarray, return_parts: bool = False):
    """Widely applicable information criterion from (S, n_cells) log likelihoods.

    WAIC = -2 * (lppd - p_waic) with lppd = sum of log mean likelihoods and
    p_waic = sum of per-cell draw variances.
    """
    ll = np.asarray(loglik_draws, dtype=float)
    if ll.ndim != 2:
        raise ValueError(f"expected (n_draws, n_cells), got shape {ll.shape}")
    s = ll.shape[0]
    lppd = float(np.sum(logsumexp(ll, axis=0) - np.log(s)))
    if s < 2:
        warnings.warn("p_waic undefined for a single draw; using 0", RuntimeWarning)
        p_waic = 0.0
    else:
        p_waic = float(np.sum(np.var(ll, axis=0, ddof=1)))
    value = -2.0 * (lppd - p_waic)
    if return_parts:
        return value, lppd, p_waic
    return value


def _gpd_fit(x: np.ndarray) -> tuple[float, float]:
    """Generalized Pareto (k, sigma) fit to tail exceedances.

    Profile-posterior point estimate over a grid of candidate scales, with the
    shape shrunk toward 0.5 for small tails.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    prior_b, prior_k = 3.0, 10.0
    m = 30 + int(np.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b /= prior_b * x[max(int(n / 4 + 0.5) - 1, 0)]
    b += 1.0 / x[-1]
    k = np.mean(np.log1p(-b[:, None] * x), axis=1)
    log_lik = n * (np.log(-b / k) - k - 1.0)
    weights = np.exp(log_lik - log_lik.max())  # unnormalized; ratio below cancels
    b_post = float(np.sum(b * weights) / np.sum(weights))
    k_raw = float(np.mean(np.log1p(-b_post * x)))
    # scale comes from the unshrunk shape; shrinking first can flip its sign
    sigma = -k_raw / b_post
    k_post = (n * k_raw + prior_k * 0.5) / (n + prior_k)
    return k_post, sigma


def _gpd_quantile(p: np.ndarray, k: float, sigma: float) -> np.ndarray:
    if np.abs(k) < 1e-12:
        return sigma * (-np.log1p(-p))
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def psis_smooth(log_ratios: np.ndarray) -> tuple[np.ndarray, float]:
    """Pareto-smooth one vector of log importance ratios.

    Returns (smoothed log ratios, k_hat).  Falls back to the unsmoothed input
    with k_hat = NaN when the tail is too small to fit.
    """
    lw = np.asarray(log_ratios, dtype=float).copy()
    s = lw.size
    tail_len = int(min(0.2 * s, 3.0 * np.sqrt(s)))
    if s < PSIS_MIN_DRAWS or tail_len < PSIS_MIN_TAIL:
        return lw, float("nan")
    lw_max = lw.max()
    lw -= lw_max  # stabilize; undone below
    order = np.argsort(lw)
    tail_idx = order[-tail_len:]
    cutoff = lw[order[-tail_len - 1]]
    exp_cutoff = np.exp(cutoff)
    exceedances = np.exp(lw[tail_idx]) - exp_cutoff
    if np.all(exceedances <= 0):
        return lw + lw_max, float("nan")
    k_hat, sigma = _gpd_fit(exceedances[exceedances > 0])
    if not np.isfinite(k_hat) or not np.isfinite(sigma) or sigma <= 0:
        return lw + lw_max, float("nan")
    probs = (np.arange(1, tail_len + 1) - 0.5) / tail_len
    smoothed = np.log(_gpd_quantile(probs, k_hat, sigma) + exp_cutoff)
    # order-preserving replacement of the tail, capped at the raw maximum
    ranks = np.argsort(lw[tail_idx])
    lw[tail_idx[ranks]] = np.minimum(smoothed, 0.0)
    return lw + lw_max, float(k_hat)


def loo(loglik_draws: np.ndarray, return_detail: bool = False):
    """Importance-sampling leave-one-out score, Pareto-smoothed when feasible.

    Per cell elpd_i = -log mean_draws exp(-ll); with smoothing the weights
    exp(-ll) are tail-adjusted first.  LOO = -2 * sum elpd_i.
    """
    ll = np.asarray(loglik_draws, dtype=float)
    if ll.ndim != 2:
        raise ValueError(f"expected (n_draws, n_cells), got shape {ll.shape}")
    s, n_cells = ll.shape
    if s < 2:
        warnings.warn("loo from a single draw has no uncertainty correction",
                      RuntimeWarning)
    elpd = np.empty(n_cells)
    khats = np.full(n_cells, np.nan)
    for i in range(n_cells):
        raw = -ll[:, i]
        smoothed, k_hat = psis_smooth(raw)
        khats[i] = k_hat
        # elpd_i = log( sum w ) - log( sum w * exp(-ll) ) with w = exp(smoothed)
        elpd[i] = logsumexp(smoothed + ll[:, i]) - logsumexp(smoothed)
    value = -2.0 * float(np.sum(elpd))
    if return_detail:
        return value, elpd, khats
    return value


@dataclass
class FitResult:
    """Everything produced by one model fit."""

    spec: ModelSpec
    config: NutsConfig
    draws: PosteriorDraws
    names: list[str]
    constrained: np.ndarray  # (C, N, P) constrained draws aligned with names
    summary: pd.DataFrame
    loglik: np.ndarray  # (S, n_observed_cells)
    waic: float
    loo: float
    khat_max: float
    extra_rows: list[str] = field(default_factory=list)

    @property
    def divergences(self) -> int:
        return self.draws.n_divergent

    def flat_unconstrained(self) -> np.ndarray:
        return self.draws.flat()


def _constrained_matrix(
    u_draws: np.ndarray, spec: ModelSpec
) -> tuple[np.ndarray, list[str]]:
    """(S, dim) unconstrained draws -> (S, P) constrained columns + names."""
    cd = model_mod.constrain_draws(u_draws, spec)
    s = u_draws.shape[0]
    cols = [
        cd["b"], cd["r"], cd["h"], cd["p"], cd["s"],
    ]
    gam = np.empty((s, 5 * spec.n_trend_blocks))
    for blk in range(spec.n_trend_blocks):
        for j, arr in enumerate(cols):
            gam[:, 5 * blk + j] = arr[:, blk]
    parts = [gam]
    if spec.n_covariates:
        parts.append(cd["beta"])
    parts.append(cd["alpha"][:, None])
    parts.append(cd["rho"][:, None])
    parts.append(cd["tau"][:, None])
    parts.append(cd["phi"].reshape(s, -1))
    mat = np.concatenate(parts, axis=1)
    return mat, ParamLayout(spec).names()


def _trend_rows(
    u_draws: np.ndarray, spec: ModelSpec
) -> tuple[np.ndarray, list[str]]:
    """Common-curve weekly trend values per draw, for summary and plots."""
    cd = model_mod.constrain_draws(u_draws, spec)
    from .richards import trend_values

    lam = trend_values(
        cd["b"][:, :, None], cd["r"][:, :, None], cd["h"][:, :, None],
        cd["p"][:, :, None], cd["s"][:, :, None],
        spec.t_grid()[None, None, :], spec.trend_formula,
    )
    lam = lam[:, 0, :]  # (S, T); only used in common mode
    names = [f"lam[{t}]" for t in range(1, spec.n_times + 1)]
    return lam, names


def fit_model(
    panel: CountPanel,
    spec: ModelSpec,
    graph: SpatialGraph,
    config: NutsConfig,
    n_workers: int = 1,
    log_path=None,
) -> FitResult:
    """Sample the posterior and assemble summaries and model scores.

    Chain starting points come from a data-scaled initializer with its own
    seed stream ([seed, 1]), so they never collide with the chain streams
    spawned inside the sampler.
    """
    evaluator = PosteriorEvaluator(panel, spec, graph)
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    inits = np.stack([
        model_mod.initial_unconstrained(panel, spec, graph, init_rng)
        for _ in range(config.n_chains)
    ])
    draws = nuts_sample(evaluator.logp_and_grad, inits, config,
                        n_workers=n_workers, log_path=log_path)

    flat = draws.flat()
    con_flat, names = _constrained_matrix(flat, spec)
    c, n, _ = draws.draws.shape
    constrained = con_flat.reshape(c, n, -1)

    cd = model_mod.constrain_draws(flat, spec)
    ll_cells = model_mod.loglik_from_draws(cd, panel, spec)
    ll_obs = ll_cells[:, panel.observed]
    waic_val = waic(ll_obs)
    loo_val, _, khats = loo(ll_obs, return_detail=True)
    khat_max = float(np.nanmax(khats)) if np.any(np.isfinite(khats)) else float("nan")

    rows = []
    for j, name in enumerate(names):
        stats = summarize_chains(constrained[:, :, j])
        stats["name"] = name
        rows.append(stats)
    extra_rows = []
    if spec.trend_mode == model_mod.TREND_COMMON:
        lam, lam_names = _trend_rows(flat, spec)
        lam_chains = lam.reshape(c, n, -1)
        for j, name in enumerate(lam_names):
            stats = summarize_chains(lam_chains[:, :, j])
            stats["name"] = name
            rows.append(stats)
            extra_rows.append(name)
    summary = pd.DataFrame(rows).set_index("name")

    return FitResult(
        spec=spec, config=config, draws=draws, names=names,
        constrained=constrained, summary=summary, loglik=ll_obs,
        waic=waic_val, loo=loo_val, khat_max=khat_max, extra_rows=extra_rows,
    )


def summary_records(fit: FitResult) -> dict:
    """JSON-safe summary payload (NaN mapped to None)."""

    def clean(v):
        if isinstance(v, float) and not np.isfinite(v):
            return None
        return v

    params = []
    for name, row in fit.summary.iterrows():
        rec = {"name": name}
        rec.update({k: clean(float(v)) for k, v in row.items()})
        params.append(rec)
    return {
        "params": params,
        "divergences": int(fit.divergences),
        "warmup_divergences": int(fit.draws.warmup_divergences.sum()),
        "waic": clean(fit.waic),
        "loo": clean(fit.loo),
        "khat_max": clean(fit.khat_max),
        "n_chains": int(fit.draws.n_chains),
        "n_kept": int(fit.draws.n_kept),
    }
