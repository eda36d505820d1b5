"""Poisson growth model with CAR-AR random effects: likelihood, priors, transforms.

Observed counts y[g,t] are Poisson with

    log mu[g,t] = offset[g] + log lam[g,t] + x[g,t,:] @ beta + phi[t,g]

where lam is a Richards weekly trend (one shared curve or one per region),
offset[g] = log(population_g / 1e5), and phi follows the CAR-AR prior from
:mod:`stgrowth.gmrf`.  Sampling happens in an unconstrained vector; this module
owns the parameter layout, the transforms with their Jacobians, and an
analytic joint gradient (finite differences would be hopeless at G*T field
sizes).

Unconstrained layout, in order:
    per trend block: [log b, log r, log h, p, log s]   (1 block or G blocks)
    beta (identity), logit(alpha), scaled-logit(rho), log tau,
    phi row-major over (t, g).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import betaln, gammaln

from . import richards
from .gmrf import CarArState, carar_stack_lpdf, carar_stack_lpdf_grad
from .graph import SpatialGraph, dense_adjacency
from .richards import RichardsParams

__all__ = [
    "TREND_COMMON",
    "TREND_REGIONAL",
    "FORMULA_LINEARIZED",
    "FORMULA_EXACT",
    "FORMULA_FLAT",
    "ModelSpec",
    "CountPanel",
    "ParamBlock",
    "ParamLayout",
    "PosteriorEvaluator",
    "log_likelihood",
    "log_prior",
    "log_posterior_and_grad",
    "to_unconstrained",
    "to_constrained",
    "constrain_draws",
    "mu_from_draws",
    "loglik_from_draws",
    "mean_matrix",
    "initial_unconstrained",
]

TREND_COMMON = "common"
TREND_REGIONAL = "regional"
FORMULA_LINEARIZED = "linearized"
FORMULA_EXACT = "exact_diff"
FORMULA_FLAT = "flat"  # constant trend; degenerate null for comparisons

# exp() clamp keeping everything finite; posteriors never get near this
_EXP_CAP = 500.0


@dataclass(frozen=True)
class ModelSpec:
    """Model structure and prior hyperparameters.

    trend_mode: "common" (one curve) or "regional" (one curve per region)
    trend_formula: "linearized" or "exact_diff" weekly trend
    sd_log_size: prior sd of log b and log r (default sqrt(100))
    sd_log_shape: prior sd of log h and log s
    sd_covariate: prior sd of each regression coefficient
    alpha_prior: Beta(a, b) hyperparameters for the spatial autocorrelation
    tau_prior: Gamma(shape, rate) hyperparameters for the innovation precision
    peak_mean / peak_sd: normal prior on the peak week; None means the
        data-window defaults T/2 and T/(2*1.96)
    """

    n_regions: int
    n_times: int
    trend_mode: str = TREND_COMMON
    trend_formula: str = FORMULA_LINEARIZED
    n_covariates: int = 0
    sd_log_size: float = 10.0
    sd_log_shape: float = 1.0
    sd_covariate: float = 10.0
    alpha_prior: tuple[float, float] = (0.5, 0.5)
    tau_prior: tuple[float, float] = (2.0, 2.0)
    peak_mean: float | None = None
    peak_sd: float | None = None

    def __post_init__(self):
        if self.n_regions < 1 or self.n_times < 1:
            raise ValueError("n_regions and n_times must be >= 1")
        if self.trend_mode not in (TREND_COMMON, TREND_REGIONAL):
            raise ValueError(f"unknown trend_mode {self.trend_mode!r}")
        if self.trend_formula not in (FORMULA_LINEARIZED, FORMULA_EXACT, FORMULA_FLAT):
            raise ValueError(f"unknown trend_formula {self.trend_formula!r}")
        if self.n_covariates < 0:
            raise ValueError("n_covariates must be >= 0")
        for name in ("sd_log_size", "sd_log_shape", "sd_covariate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.alpha_prior) <= 0 or min(self.tau_prior) <= 0:
            raise ValueError("prior hyperparameters must be positive")

    @property
    def n_trend_blocks(self) -> int:
        return self.n_regions if self.trend_mode == TREND_REGIONAL else 1

    def peak_prior(self) -> tuple[float, float]:
        mean = self.n_times / 2.0 if self.peak_mean is None else self.peak_mean
        sd = self.n_times / (2.0 * 1.96) if self.peak_sd is None else self.peak_sd
        return mean, sd

    def t_grid(self) -> np.ndarray:
        return np.arange(1, self.n_times + 1, dtype=float)


@dataclass
class CountPanel:
    """Weekly regional count panel.

    y: (G, T) nonnegative counts
    offset_log: (G,) log(population / 1e5)
    x: (G, T, K) standardized covariates (K may be 0)
    observed: (G, T) bool; False = held out (excluded from the likelihood)
    regions / weeks: labels for IO
    x_center / x_scale: standardization constants stored at ingestion
    phi_true / params_true: set by the simulator for recovery checks
    """

    y: np.ndarray
    offset_log: np.ndarray
    x: np.ndarray | None = None
    observed: np.ndarray | None = None
    regions: list[str] | None = None
    weeks: list[int] | None = None
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    phi_true: np.ndarray | None = None
    params_true: object = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 2:
            raise ValueError(f"y must be (n_regions, n_times), got shape {self.y.shape}")
        g, t = self.y.shape
        if np.any(~np.isfinite(self.y)) or np.any(self.y < 0):
            raise ValueError("counts must be finite and nonnegative")
        if np.any(self.y != np.round(self.y)):
            raise ValueError("counts must be integers")
        self.offset_log = np.asarray(self.offset_log, dtype=float)
        if self.offset_log.shape != (g,):
            raise ValueError(f"offset_log must have shape ({g},)")
        if np.any(~np.isfinite(self.offset_log)):
            raise ValueError("offsets must be finite")
        if self.x is None:
            self.x = np.zeros((g, t, 0))
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape[:2] != (g, t) or self.x.ndim != 3:
            raise ValueError(f"x must be ({g}, {t}, K), got shape {self.x.shape}")
        if np.any(~np.isfinite(self.x)):
            raise ValueError("covariates must be finite")
        if self.observed is None:
            self.observed = np.ones((g, t), dtype=bool)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.observed.shape != (g, t):
            raise ValueError(f"observed must have shape ({g}, {t})")
        if self.regions is None:
            self.regions = [f"region_{k + 1}" for k in range(g)]
        if self.weeks is None:
            self.weeks = list(range(1, t + 1))

    @property
    def n_regions(self) -> int:
        return self.y.shape[0]

    @property
    def n_times(self) -> int:
        return self.y.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[2]

    def with_mask(self, observed: np.ndarray) -> "CountPanel":
        """Copy of the panel with a new observation mask."""
        return replace(self, observed=np.asarray(observed, dtype=bool).copy())


@dataclass
class ParamBlock:
    """Constrained-space parameters: trend curves, covariate effects, field."""

    gamma: list[RichardsParams]
    beta: np.ndarray
    car: CarArState

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)

    def gamma_arrays(self) -> tuple[np.ndarray, ...]:
        """(b, r, h, p, s) stacked over trend blocks, each shaped (B,)."""
        vals = np.array([g.as_tuple() for g in self.gamma], dtype=float)
        return tuple(vals[:, k] for k in range(5))


class ParamLayout:
    """Index map between the unconstrained vector and named blocks."""

    def __init__(self, spec: ModelSpec):
        b = spec.n_trend_blocks
        k = spec.n_covariates
        g, t = spec.n_regions, spec.n_times
        self.spec = spec
        self.n_blocks = b
        self.gamma_sl = slice(0, 5 * b)
        self.beta_sl = slice(5 * b, 5 * b + k)
        self.alpha_idx = 5 * b + k
        self.rho_idx = 5 * b + k + 1
        self.tau_idx = 5 * b + k + 2
        self.phi_sl = slice(5 * b + k + 3, 5 * b + k + 3 + t * g)
        self.dim = 5 * b + k + 3 + t * g

    def names(self) -> list[str]:
        """Constrained parameter names, aligned with to_constrained output."""
        spec = self.spec
        out: list[str] = []
        if spec.n_trend_blocks == 1:
            out += ["b", "r", "h", "p", "s"]
        else:
            for i in range(1, spec.n_trend_blocks + 1):
                out += [f"b[{i}]", f"r[{i}]", f"h[{i}]", f"p[{i}]", f"s[{i}]"]
        out += [f"beta[{k + 1}]" for k in range(spec.n_covariates)]
        out += ["alpha", "rho", "tau"]
        for t in range(1, spec.n_times + 1):
            for g in range(1, spec.n_regions + 1):
                out.append(f"phi[{t},{g}]")
        return out


def _softplus(x: float) -> float:
    # scalar log(1 + e^x), stable on both tails
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def to_unconstrained(params: ParamBlock, spec: ModelSpec) -> np.ndarray:
    """Map constrained parameters to the flat sampling vector."""
    layout = ParamLayout(spec)
    if len(params.gamma) != spec.n_trend_blocks:
        raise ValueError(
            f"expected {spec.n_trend_blocks} trend blocks, got {len(params.gamma)}"
        )
    u = np.empty(layout.dim)
    for i, gam in enumerate(params.gamma):
        base = 5 * i
        u[base + 0] = np.log(gam.b)
        u[base + 1] = np.log(gam.r)
        u[base + 2] = np.log(gam.h)
        u[base + 3] = gam.p
        u[base + 4] = np.log(gam.s)
    u[layout.beta_sl] = params.beta
    car = params.car
    u[layout.alpha_idx] = np.log(car.alpha) - np.log1p(-car.alpha)
    sig = (car.rho + 1.0) / 2.0
    u[layout.rho_idx] = np.log(sig) - np.log1p(-sig)
    u[layout.tau_idx] = np.log(car.tau)
    u[layout.phi_sl] = np.asarray(car.phi, dtype=float).reshape(-1)
    return u


def to_constrained(u: np.ndarray, spec: ModelSpec) -> tuple[ParamBlock, float]:
    """Inverse transform; also returns the log |Jacobian| of the map u -> theta."""
    layout = ParamLayout(spec)
    u = np.asarray(u, dtype=float)
    if u.shape != (layout.dim,):
        raise ValueError(f"expected vector of length {layout.dim}, got shape {u.shape}")
    gammas = []
    log_jac = 0.0
    for i in range(layout.n_blocks):
        ub, ur, uh, p, us = u[5 * i : 5 * i + 5]
        gammas.append(
            RichardsParams(
                b=float(np.exp(ub)), r=float(np.exp(ur)), h=float(np.exp(uh)),
                p=float(p), s=float(np.exp(us)),
            )
        )
        log_jac += float(ub + ur + uh + us)
    beta = u[layout.beta_sl].copy()
    ua = float(u[layout.alpha_idx])
    urho = float(u[layout.rho_idx])
    utau = float(u[layout.tau_idx])
    alpha = _sigmoid_scalar(ua)
    rho = 2.0 * _sigmoid_scalar(urho) - 1.0
    tau = float(np.exp(utau))
    # d alpha/d ua = alpha(1-alpha); d rho/d urho = 2 sigma(1-sigma); d tau/d utau = tau
    log_jac += float(-_softplus(-ua) - _softplus(ua))
    log_jac += float(np.log(2.0) - _softplus(-urho) - _softplus(urho))
    log_jac += utau
    phi = u[layout.phi_sl].reshape(spec.n_times, spec.n_regions).copy()
    car = CarArState(phi=phi, alpha=alpha, rho=rho, tau=tau)
    return ParamBlock(gamma=gammas, beta=beta, car=car), float(log_jac)


def _expand_trend(lam: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """(B, T) trend to (G, T); a common curve broadcasts over regions."""
    if spec.trend_mode == TREND_REGIONAL:
        return lam
    return np.broadcast_to(lam, (spec.n_regions, spec.n_times))


def _linear_predictor(params: ParamBlock, panel: CountPanel, spec: ModelSpec) -> np.ndarray:
    b, r, h, p, s = params.gamma_arrays()
    lam = richards.trend_values(
        b[:, None], r[:, None], h[:, None], p[:, None], s[:, None],
        spec.t_grid()[None, :], spec.trend_formula,
    )
    eta = panel.offset_log[:, None] + np.log(_expand_trend(lam, spec)) + params.car.phi.T
    if spec.n_covariates:
        eta = eta + panel.x @ params.beta
    return eta


def log_likelihood(params: ParamBlock, panel: CountPanel, spec: ModelSpec) -> float:
    """Poisson log likelihood over observed cells."""
    eta = _linear_predictor(params, panel, spec)
    obs = panel.observed
    y = panel.y
    ll = y[obs] * eta[obs] - np.exp(eta[obs]) - gammaln(y[obs] + 1.0)
    return float(np.sum(ll))


def log_prior(params: ParamBlock, spec: ModelSpec, graph: SpatialGraph) -> float:
    """Joint log prior density on the constrained parameters."""
    if graph.n_regions != spec.n_regions:
        raise ValueError("graph size does not match spec.n_regions")
    pm, psd = spec.peak_prior()
    lp = 0.0
    for gam in params.gamma:
        # log b, log r, log h, log s normal => lognormal densities on b,r,h,s
        for val, sd in (
            (gam.b, spec.sd_log_size), (gam.r, spec.sd_log_size),
            (gam.h, spec.sd_log_shape), (gam.s, spec.sd_log_shape),
        ):
            lv = np.log(val)
            lp += -0.5 * np.log(2 * np.pi) - np.log(sd) - 0.5 * (lv / sd) ** 2 - lv
        lp += -0.5 * np.log(2 * np.pi) - np.log(psd) - 0.5 * ((gam.p - pm) / psd) ** 2
    lp += float(
        np.sum(
            -0.5 * np.log(2 * np.pi) - np.log(spec.sd_covariate)
            - 0.5 * (params.beta / spec.sd_covariate) ** 2
        )
    )
    a0, b0 = spec.alpha_prior
    alpha = params.car.alpha
    lp += (a0 - 1.0) * np.log(alpha) + (b0 - 1.0) * np.log1p(-alpha) - betaln(a0, b0)
    lp += -np.log(2.0)  # rho ~ Uniform(-1, 1)
    at, bt = spec.tau_prior
    tau = params.car.tau
    lp += at * np.log(bt) - gammaln(at) + (at - 1.0) * np.log(tau) - bt * tau
    lp += carar_stack_lpdf(params.car.phi, params.car.rho, tau, alpha, graph)
    return float(lp)


class PosteriorEvaluator:
    """Joint unconstrained log posterior with analytic gradient.

    Precomputes everything that does not change between calls; the instance's
    ``logp_and_grad`` is the sampler target.
    """

    def __init__(self, panel: CountPanel, spec: ModelSpec, graph: SpatialGraph):
        if panel.n_regions != spec.n_regions or panel.n_times != spec.n_times:
            raise ValueError("panel dimensions do not match spec")
        if panel.n_covariates != spec.n_covariates:
            raise ValueError(
                f"panel has {panel.n_covariates} covariates, spec expects {spec.n_covariates}"
            )
        if graph.n_regions != spec.n_regions:
            raise ValueError("graph size does not match spec.n_regions")
        self.panel = panel
        self.spec = spec
        self.graph = graph
        self.layout = ParamLayout(spec)
        self._t = spec.t_grid()[None, :]
        self._y = panel.y
        self._obs = panel.observed.astype(float)
        self._offset = panel.offset_log[:, None]
        self._x = panel.x if spec.n_covariates else None
        self._lgamma_const = float(np.sum(gammaln(panel.y[panel.observed] + 1.0)))
        self._w_dense = dense_adjacency(graph)
        pm, psd = spec.peak_prior()
        self._pm, self._psd = pm, psd
        # parameter-independent prior normalizers, folded once
        a0, b0 = spec.alpha_prior
        at, bt = spec.tau_prior
        self._prior_const = float(
            spec.n_trend_blocks * (
                -2.0 * np.log(spec.sd_log_size) - 2.0 * np.log(spec.sd_log_shape)
                - np.log(psd) - 2.5 * np.log(2 * np.pi)
            )
            - betaln(a0, b0)
            + at * np.log(bt) - gammaln(at)
        )

    @property
    def dim(self) -> int:
        return self.layout.dim

    def logp(self, u: np.ndarray) -> float:
        return self.logp_and_grad(u)[0]

    def logp_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        spec, layout = self.spec, self.layout
        u = np.asarray(u, dtype=float)
        nb = layout.n_blocks
        ug = u[layout.gamma_sl].reshape(nb, 5)
        ub, ur, uh, pp, us = ug[:, 0], ug[:, 1], ug[:, 2], ug[:, 3], ug[:, 4]
        b = np.exp(np.minimum(ub, _EXP_CAP))
        r = np.exp(np.minimum(ur, _EXP_CAP))
        h = np.exp(np.minimum(uh, _EXP_CAP))
        s = np.exp(np.minimum(us, _EXP_CAP))
        beta = u[layout.beta_sl]
        ua = float(u[layout.alpha_idx])
        urho = float(u[layout.rho_idx])
        utau = float(u[layout.tau_idx])
        alpha = _sigmoid_scalar(ua)
        rho = 2.0 * _sigmoid_scalar(urho) - 1.0
        tau = float(np.exp(min(utau, _EXP_CAP)))
        phi = u[layout.phi_sl].reshape(spec.n_times, spec.n_regions)

        grad = np.zeros(layout.dim)

        lam, dpart = richards.trend_with_partials(
            b[:, None], r[:, None], h[:, None], pp[:, None], s[:, None],
            self._t, spec.trend_formula,
        )
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            return -np.inf, grad

        # lam is (1, T) or (G, T); broadcasting handles the common-trend case
        eta = self._offset + phi.T + np.log(lam)
        if self._x is not None:
            eta = eta + self._x @ beta
        mu = np.exp(np.minimum(eta, _EXP_CAP))
        obs = self._obs
        ll = float((obs * (self._y * eta - mu)).sum()) - self._lgamma_const
        if not np.isfinite(ll):
            return -np.inf, grad
        resid = obs * (self._y - mu)

        # trend-parameter gradients: d ll/d theta = sum resid * d log lam/d theta
        wlam = resid / lam
        if spec.trend_mode == TREND_COMMON:
            wvec = wlam.sum(axis=0)  # (T,)
            gb = float(wvec @ dpart["b"][0])
            gr = float(wvec @ dpart["r"][0])
            gh = float(wvec @ dpart["h"][0])
            gp = float(wvec @ dpart["p"][0])
            gs = float(wvec @ dpart["s"][0])
            g_gamma = np.array([[gb, gr, gh, gp, gs]])
        else:
            g_gamma = np.stack(
                [np.einsum("gt,gt->g", wlam, dpart[k]) for k in ("b", "r", "h", "p", "s")],
                axis=1,
            )

        # chain rule through the log transforms; p is identity
        g_gamma[:, 0] *= b
        g_gamma[:, 1] *= r
        g_gamma[:, 2] *= h
        g_gamma[:, 4] *= s

        # priors on the unconstrained trend coordinates (normal after Jacobian)
        sd2_size = spec.sd_log_size**2
        sd2_shape = spec.sd_log_shape**2
        lp = ll
        lp += float(
            (-0.5 * (ub**2 + ur**2) / sd2_size).sum()
            + (-0.5 * (uh**2 + us**2) / sd2_shape).sum()
            + (-0.5 * ((pp - self._pm) / self._psd) ** 2).sum()
        )
        lp += self._prior_const
        g_gamma[:, 0] -= ub / sd2_size
        g_gamma[:, 1] -= ur / sd2_size
        g_gamma[:, 2] -= uh / sd2_shape
        g_gamma[:, 4] -= us / sd2_shape
        g_gamma[:, 3] -= (pp - self._pm) / self._psd**2
        grad[layout.gamma_sl] = g_gamma.reshape(-1)

        if self._x is not None:
            lp += float(
                (-0.5 * (beta / spec.sd_covariate) ** 2).sum()
                - beta.size * (0.5 * np.log(2 * np.pi) + np.log(spec.sd_covariate))
            )
            grad[layout.beta_sl] = (
                np.einsum("gt,gtk->k", resid, self._x) - beta / spec.sd_covariate**2
            )

        # alpha: Beta(a0, b0) prior plus logit Jacobian (normalizer precomputed)
        a0, b0 = spec.alpha_prior
        lp += -a0 * _softplus(-ua) - b0 * _softplus(ua)
        g_alpha_prior = a0 - (a0 + b0) * alpha
        # rho: Uniform(-1,1) plus scaled-logit Jacobian
        lp += -_softplus(-urho) - _softplus(urho)
        g_rho_prior = 1.0 - 2.0 * _sigmoid_scalar(urho)
        # tau: Gamma(at, bt) prior plus log Jacobian
        at, bt = spec.tau_prior
        lp += at * utau - bt * tau
        g_tau_prior = at - bt * tau

        car_lp, d_phi, d_alpha, d_rho, d_tau = carar_stack_lpdf_grad(
            phi, rho, tau, alpha, self.graph, w_dense=self._w_dense
        )
        lp += car_lp
        if not np.isfinite(lp):
            return -np.inf, np.zeros(layout.dim)

        grad[layout.alpha_idx] = g_alpha_prior + d_alpha * alpha * (1.0 - alpha)
        grad[layout.rho_idx] = g_rho_prior + d_rho * (1.0 - rho**2) / 2.0
        grad[layout.tau_idx] = g_tau_prior + d_tau * tau
        grad[layout.phi_sl] = (resid.T + d_phi).reshape(-1)
        return float(lp), grad


def log_posterior_and_grad(
    u: np.ndarray, panel: CountPanel, spec: ModelSpec, graph: SpatialGraph
) -> tuple[float, np.ndarray]:
    """One-shot unconstrained log posterior and gradient (tests, small jobs)."""
    return PosteriorEvaluator(panel, spec, graph).logp_and_grad(u)


def constrain_draws(u_draws: np.ndarray, spec: ModelSpec) -> dict[str, np.ndarray]:
    """Vectorized transform of (S, dim) unconstrained draws to named arrays."""
    layout = ParamLayout(spec)
    u_draws = np.asarray(u_draws, dtype=float)
    if u_draws.ndim != 2 or u_draws.shape[1] != layout.dim:
        raise ValueError(f"expected (S, {layout.dim}) draws, got shape {u_draws.shape}")
    n = u_draws.shape[0]
    gam = u_draws[:, layout.gamma_sl].reshape(n, layout.n_blocks, 5)

    def sig(x):
        return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))

    return {
        "b": np.exp(gam[:, :, 0]),
        "r": np.exp(gam[:, :, 1]),
        "h": np.exp(gam[:, :, 2]),
        "p": gam[:, :, 3].copy(),
        "s": np.exp(gam[:, :, 4]),
        "beta": u_draws[:, layout.beta_sl].copy(),
        "alpha": sig(u_draws[:, layout.alpha_idx]),
        "rho": 2.0 * sig(u_draws[:, layout.rho_idx]) - 1.0,
        "tau": np.exp(u_draws[:, layout.tau_idx]),
        "phi": u_draws[:, layout.phi_sl].reshape(n, spec.n_times, spec.n_regions).copy(),
    }


def _eta_from_draws(
    draws: dict[str, np.ndarray], panel: CountPanel, spec: ModelSpec
) -> np.ndarray:
    lam = richards.trend_values(
        draws["b"][:, :, None], draws["r"][:, :, None], draws["h"][:, :, None],
        draws["p"][:, :, None], draws["s"][:, :, None],
        spec.t_grid()[None, None, :], spec.trend_formula,
    )  # (S, B, T); a common curve (B=1) broadcasts over regions
    eta = panel.offset_log[None, :, None] + np.log(lam) + np.transpose(draws["phi"], (0, 2, 1))
    if spec.n_covariates:
        eta = eta + np.einsum("gtk,sk->sgt", panel.x, draws["beta"])
    return eta


def mu_from_draws(
    draws: dict[str, np.ndarray], panel: CountPanel, spec: ModelSpec
) -> np.ndarray:
    """Poisson means, shape (S, G, T), for constrained draws from constrain_draws."""
    return np.exp(np.minimum(_eta_from_draws(draws, panel, spec), _EXP_CAP))


def loglik_from_draws(
    draws: dict[str, np.ndarray], panel: CountPanel, spec: ModelSpec
) -> np.ndarray:
    """Pointwise Poisson log likelihood, shape (S, G, T), every cell."""
    eta = _eta_from_draws(draws, panel, spec)
    mu = np.exp(np.minimum(eta, _EXP_CAP))
    y = panel.y[None, :, :]
    return y * eta - mu - gammaln(y + 1.0)


def mean_matrix(params: ParamBlock, panel: CountPanel, spec: ModelSpec) -> np.ndarray:
    """Poisson mean matrix (G, T) for a single parameter set."""
    return np.exp(np.minimum(_linear_predictor(params, panel, spec), _EXP_CAP))


def initial_unconstrained(
    panel: CountPanel, spec: ModelSpec, graph: SpatialGraph, rng: np.random.Generator
) -> np.ndarray:
    """Data-scaled random starting point in unconstrained space.

    Centers log r on the per-offset total count, the peak on the empirically
    heaviest week, and everything else near prior medians with mild jitter.
    """
    layout = ParamLayout(spec)
    u = np.zeros(layout.dim)
    y, obs = panel.y, panel.observed
    totals = np.where(obs, y, 0.0).sum(axis=1) / np.exp(panel.offset_log)
    weekly = np.where(obs, y, 0.0).sum(axis=0)
    peak_week = float(np.argmax(weekly) + 1)
    for i in range(layout.n_blocks):
        size = totals[i] if spec.trend_mode == TREND_REGIONAL else float(np.mean(totals))
        base = 5 * i
        u[base + 0] = np.log(0.05) + 0.3 * rng.standard_normal()
        u[base + 1] = np.log(max(size, 1.0)) + 0.3 * rng.standard_normal()
        u[base + 2] = np.log(0.6) + 0.3 * rng.standard_normal()
        u[base + 3] = peak_week + rng.standard_normal()
        u[base + 4] = 0.3 * rng.standard_normal()
    u[layout.beta_sl] = 0.1 * rng.standard_normal(spec.n_covariates)
    u[layout.alpha_idx] = 0.5 * rng.standard_normal()
    u[layout.rho_idx] = 1.0 + 0.5 * rng.standard_normal()
    u[layout.tau_idx] = np.log(4.0) + 0.3 * rng.standard_normal()
    u[layout.phi_sl] = 0.1 * rng.standard_normal(spec.n_times * spec.n_regions)
    return u
