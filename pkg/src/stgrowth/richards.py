"""Generalised-logistic (Richards) growth curves and weekly trend formulas.

All functions accept scalars or numpy arrays for the time argument and
broadcast over parameter arrays, so the same code serves scalar evaluation,
a (T,) grid, and batched posterior draws shaped (S, 1) against a (T,) grid.

The cumulative curve is
    Lambda(t) = baseline_term + r * (1 + exp(h * (p - t)))**(-s)
with a constant baseline ``b`` (classic form) or a linear one ``b * t``.
``h * (p - t)`` can reach +/-60 for realistic parameters, so every evaluation
goes through softplus / log1p rather than naive exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RichardsParams",
    "richards_classic",
    "richards_linear_baseline",
    "richards_diff",
    "richards_deriv_approx",
    "trend_values",
    "trend_with_partials",
]


@dataclass(frozen=True)
class RichardsParams:
    """Parameters of a generalised-logistic cumulative curve.

    b: baseline level (classic form) or baseline slope (linear form), >= 0
    r: final size of the logistic component, >= 0
    h: growth rate, > 0
    p: peak / inflection location in week units (any real)
    s: asymmetry; s < 1 shifts the peak early, s > 1 late, > 0
    """

    b: float
    r: float
    h: float
    p: float
    s: float

    def __post_init__(self):
        for name in ("b", "r", "h", "p", "s"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.b < 0 or self.r < 0:
            raise ValueError("b and r must be nonnegative")
        if self.h <= 0 or self.s <= 0:
            raise ValueError("h and s must be strictly positive")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.b, self.r, self.h, self.p, self.s)


def _softplus(x):
    # log(1 + e^x), stable on both tails
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x >= 0
    # split so exp never overflows; sigmoid(0) is exactly 0.5
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out[0] if scalar else out


def _logistic_pow(h, p, s, t):
    """(1 + exp(h*(p - t)))**(-s) = exp(-s * softplus(h*(p-t))), in [0, 1]."""
    z = h * (p - np.asarray(t, dtype=float))
    return np.exp(-s * _softplus(z))


def richards_classic(gamma: RichardsParams, t):
    """Cumulative curve with constant baseline: b + r*(1+e^{h(p-t)})^{-s}."""
    b, r, h, p, s = gamma.as_tuple()
    return b + r * _logistic_pow(h, p, s, t)


def richards_linear_baseline(gamma: RichardsParams, t):
    """Cumulative curve with linear baseline: b*t + r*(1+e^{h(p-t)})^{-s}."""
    b, r, h, p, s = gamma.as_tuple()
    t = np.asarray(t, dtype=float)
    return b * t + r * _logistic_pow(h, p, s, t)


def richards_diff(gamma: RichardsParams, t):
    """Exact weekly increment of the linear-baseline cumulative curve.

    Equals richards_linear_baseline(gamma, t) - richards_linear_baseline(gamma, t-1)
    up to floating-point rounding at the cumulative curve's scale.
    """
    b, r, h, p, s = gamma.as_tuple()
    t = np.asarray(t, dtype=float)
    return b + r * (_logistic_pow(h, p, s, t) - _logistic_pow(h, p, s, t - 1.0))


def richards_deriv_approx(gamma: RichardsParams, t):
    """Linearised weekly trend: b + r*s*h * e^{h(p-t)} * (1+e^{h(p-t)})^{-(s+1)}.

    Evaluated as r*s*h * sigmoid(z) * sigmoid(-z)**s with z = h*(p-t); at z = 0,
    s = 1 this is exactly b + r*h/4 in IEEE arithmetic.  Underflows to b far
    from the peak, never NaN.
    """
    b, r, h, p, s = gamma.as_tuple()
    t = np.asarray(t, dtype=float)
    z = h * (p - t)
    return b + r * s * h * _sigmoid(z) * _sigmoid(-z) ** s


def trend_values(b, r, h, p, s, t, formula: str):
    """Weekly trend for broadcastable parameter arrays.

    formula: "linearized" (derivative approximation), "exact_diff" (first
    differences of the linear-baseline cumulative curve), or "flat" (constant
    b; a degenerate null useful for model-comparison checks).  Parameters and
    t broadcast together; returns the broadcast shape.
    """
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if formula == "linearized":
        z = h * (p - t)
        return b + r * s * h * _sigmoid(z) * _sigmoid(-z) ** s
    if formula == "exact_diff":
        f1 = np.exp(-s * _softplus(h * (p - t)))
        f0 = np.exp(-s * _softplus(h * (p - t + 1.0)))
        return b + r * (f1 - f0)
    if formula == "flat":
        shape = np.broadcast(b, r, h, p, s, t).shape
        return np.broadcast_to(b, shape).copy()
    raise ValueError(f"unknown trend formula {formula!r}")


def trend_with_partials(b, r, h, p, s, t, formula: str):
    """Weekly trend plus partial derivatives w.r.t. each curve parameter.

    Returns (lam, partials) where partials is a dict with keys
    "b", "r", "h", "p", "s", each broadcast like lam.  Used by the posterior
    gradient; shapes follow numpy broadcasting of the inputs.
    """
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)

    if formula == "linearized":
        z = h * (p - t)
        sig = _sigmoid(z)
        sp = _softplus(z)
        # same expression as trend_values so lam matches bit-for-bit
        g = s * h * sig * _sigmoid(-z) ** s
        lam = b + r * g
        # d g / d z = g * (1 - (s+1)*sigmoid(z))
        dg_dz = g * (1.0 - (s + 1.0) * sig)
        # read-only broadcast views; consumers only reduce over them
        d_b = np.broadcast_to(np.float64(1.0), lam.shape)
        d_r = np.broadcast_to(g, lam.shape)
        d_h = r * (g / h + dg_dz * (p - t))
        d_p = r * dg_dz * h
        d_s = r * g * (1.0 / s - sp)
        return lam, {"b": d_b, "r": d_r, "h": d_h, "p": d_p, "s": d_s}

    if formula == "exact_diff":
        z1 = h * (p - t)
        z0 = h * (p - t + 1.0)
        sp1, sp0 = _softplus(z1), _softplus(z0)
        sig1, sig0 = _sigmoid(z1), _sigmoid(z0)
        f1 = np.exp(-s * sp1)
        f0 = np.exp(-s * sp0)
        lam = b + r * (f1 - f0)
        # dF/dz = -s * sigmoid(z) * F
        df1_dz = -s * sig1 * f1
        df0_dz = -s * sig0 * f0
        d_b = np.broadcast_to(np.float64(1.0), lam.shape)
        d_r = np.broadcast_to(f1 - f0, lam.shape)
        d_h = r * (df1_dz * (p - t) - df0_dz * (p - t + 1.0))
        d_p = r * (df1_dz - df0_dz) * h
        d_s = r * (-sp1 * f1 + sp0 * f0)
        return lam, {"b": d_b, "r": d_r, "h": d_h, "p": d_p, "s": d_s}

    if formula == "flat":
        shape = np.broadcast(b, r, h, p, s, t).shape
        lam = np.broadcast_to(b, shape).copy()
        one = np.ones(shape)
        zero = np.zeros(shape)
        return lam, {"b": one, "r": zero, "h": zero, "p": zero, "s": zero}

    raise ValueError(f"unknown trend formula {formula!r}")
