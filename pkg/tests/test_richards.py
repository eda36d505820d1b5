"""Growth-curve forms: frozen high-precision values, identities, partials."""

import numpy as np
import pytest

from stgrowth.richards import (
    RichardsParams,
    richards_classic,
    richards_deriv_approx,
    richards_diff,
    richards_linear_baseline,
    trend_values,
    trend_with_partials,
)

T_POINTS = np.array([0.0, 4.75, 8.0, 19.0])

SET_A = RichardsParams(0.05, 23.0, 0.62, 8.0, 7.8)
SET_B = RichardsParams(1.2, 480.0, 0.33, 12.5, 0.7)
SET_C = RichardsParams(0.0, 5.5, 1.1, 3.0, 1.0)

# 50-digit reference values from scripts/oracles.py, evaluated at T_POINTS.
ORACLE = {
    ("classic", "A"): [0.050000000000000344, 0.050001294107473596,
                       0.15320336783176486, 22.855082723560195],
    ("classic", "B"): [27.644868307606791, 77.242071884550236,
                       148.33779942063017, 445.40710384505917],
    ("classic", "C"): [0.19564154099949895, 4.7998222905854557,
                       5.4776142425625713, 5.4999998750374732],
    ("linear_baseline", "A"): [3.4361298044620648e-16, 0.2375012941074736,
                               0.50320336783176486, 23.755082723560195],
    ("linear_baseline", "B"): [26.444868307606791, 81.742071884550236,
                               156.73779942063017, 467.00710384505917],
    ("linear_baseline", "C"): [0.19564154099949895, 4.7998222905854557,
                               5.4776142425625713, 5.4999998750374732],
    ("exact_diff", "A"): [0.050000000000000341, 0.050001278220462798,
                          0.14684504338115175, 0.21593296573930899],
    ("exact_diff", "B"): [6.5885898817769764, 16.015388141946701,
                          27.108757975748659, 13.512467643881492],
    ("exact_diff", "C"): [0.12893514858599063, 0.9756906091738461,
                          0.044320634976079619, 2.5044563331118963e-7],
    ("linearized", "A"): [0.05000000000000165, 0.050005522095714259,
                          0.29954574341720744, 0.1702695560327396],
    ("linearized", "B"): [7.2115961767874266, 17.502317615784802,
                          28.911999022700004, 11.953657255971686],
    ("linearized", "C"): [0.20755057258651712, 0.67214571540379912,
                          0.024524108753962091, 1.3745877631656515e-7],
}
FNS = {
    "classic": richards_classic,
    "linear_baseline": richards_linear_baseline,
    "exact_diff": richards_diff,
    "linearized": richards_deriv_approx,
}
PARAMS = {"A": SET_A, "B": SET_B, "C": SET_C}


@pytest.mark.parametrize("kind,label", sorted(ORACLE))
def test_curve_values_match_high_precision_reference(kind, label):
    got = FNS[kind](PARAMS[label], T_POINTS)
    want = np.array(ORACLE[(kind, label)])
    # atol floor: sub-1e-7 tail values carry cancellation error near F ~ 1
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)


def test_diff_equals_finite_difference_of_linear_baseline():
    # curve-scale relative error: |diff - fd| / max(1, |cum(t)|, |cum(t-1)|)
    rng = np.random.default_rng(20201)
    n = 10_000
    b = rng.uniform(0.0, 2.0, n)
    r = np.exp(rng.uniform(np.log(0.5), np.log(500.0), n))
    h = rng.uniform(0.05, 2.0, n)
    p = rng.uniform(-5.0, 30.0, n)
    s = np.exp(rng.uniform(np.log(0.1), np.log(10.0), n))
    t = rng.uniform(-10.0, 40.0, n)
    worst = 0.0
    for i in range(n):
        gam = RichardsParams(b[i], r[i], h[i], p[i], s[i])
        diff = float(richards_diff(gam, np.array([t[i]]))[0])
        cum1 = float(richards_linear_baseline(gam, np.array([t[i]]))[0])
        cum0 = float(richards_linear_baseline(gam, np.array([t[i] - 1.0]))[0])
        scale = max(1.0, abs(cum1), abs(cum0))
        worst = max(worst, abs(diff - (cum1 - cum0)) / scale)
    assert worst <= 1e-12, worst


def test_symmetric_peak_value_is_exact():
    # at t = p with s = 1 the linearized weekly curve is b + r*h/4, exactly
    rng = np.random.default_rng(77)
    for _ in range(50):
        b = float(rng.uniform(0.0, 3.0))
        r = float(rng.uniform(0.1, 400.0))
        h = float(rng.uniform(0.01, 3.0))
        p = float(rng.uniform(-10.0, 30.0))
        gam = RichardsParams(b, r, h, p, 1.0)
        got = float(richards_deriv_approx(gam, np.array([p]))[0])
        assert got == b + r * h / 4.0


def test_partials_match_high_precision_reference():
    """d/dh, d/dp, d/ds at set A, t=5 against scripts/oracles.py."""
    t = np.array([5.0])
    want = {
        "linearized": (-0.00028400910882421894, -6.3888021167787671e-5,
                       -2.9232545771639003e-5),
        "exact_diff": (-7.3974880844601287e-5, -1.5360710539000017e-5,
                       -7.3381519234938391e-6),
    }
    for formula, (dh, dp, ds) in want.items():
        _, parts = trend_with_partials(0.05, 23.0, 0.62, 8.0, 7.8, t, formula)
        np.testing.assert_allclose(parts["h"], [dh], rtol=1e-12)
        np.testing.assert_allclose(parts["p"], [dp], rtol=1e-12)
        np.testing.assert_allclose(parts["s"], [ds], rtol=1e-12)


@pytest.mark.parametrize("formula", ["linearized", "exact_diff"])
def test_partials_match_central_differences(formula):
    rng = np.random.default_rng(31)
    t = np.linspace(-2.0, 25.0, 9)
    eps = 1e-6
    for _ in range(40):
        b = float(rng.uniform(0.01, 2.0))
        r = float(rng.uniform(1.0, 300.0))
        h = float(rng.uniform(0.1, 1.5))
        p = float(rng.uniform(0.0, 22.0))
        s = float(np.exp(rng.uniform(np.log(0.3), np.log(6.0))))
        base = dict(b=b, r=r, h=h, p=p, s=s)
        _, parts = trend_with_partials(b, r, h, p, s, t, formula)
        for name in ("b", "r", "h", "p", "s"):
            hi, lo = dict(base), dict(base)
            hi[name] += eps
            lo[name] -= eps
            up = trend_values(hi["b"], hi["r"], hi["h"], hi["p"], hi["s"], t, formula)
            dn = trend_values(lo["b"], lo["r"], lo["h"], lo["p"], lo["s"], t, formula)
            fd = (up - dn) / (2.0 * eps)
            err = np.max(np.abs(parts[name] - fd) / np.maximum(1.0, np.abs(fd)))
            assert err < 5e-6, (formula, name, err)


def test_flat_formula_is_constant_baseline():
    lam = trend_values(0.7, 23.0, 0.62, 8.0, 7.8, np.arange(10.0), "flat")
    np.testing.assert_array_equal(lam, np.full(10, 0.7))
    lam, parts = trend_with_partials(0.7, 23.0, 0.62, 8.0, 7.8, np.arange(10.0), "flat")
    np.testing.assert_array_equal(parts["b"], np.ones(10))
    for name in ("r", "h", "p", "s"):
        np.testing.assert_array_equal(parts[name], np.zeros(10))


def test_partials_cover_curve_shape():
    # every partial has the same shape as the curve and is finite
    t = np.linspace(-30.0, 60.0, 41)
    for formula in ("linearized", "exact_diff", "flat"):
        lam, parts = trend_with_partials(0.1, 50.0, 0.9, 10.0, 2.5, t, formula)
        assert lam.shape == t.shape
        assert np.all(np.isfinite(lam))
        for name, arr in parts.items():
            assert arr.shape == t.shape, (formula, name)
            assert np.all(np.isfinite(arr)), (formula, name)


def test_extreme_arguments_do_not_overflow():
    # far tails: exp(h*(p-t)) would overflow naively; values must stay finite
    t = np.array([-1e4, 1e4])
    for formula in ("linearized", "exact_diff"):
        lam = trend_values(0.5, 100.0, 2.0, 0.0, 5.0, t, formula)
        assert np.all(np.isfinite(lam))
        assert lam[0] == pytest.approx(0.5)  # deep left tail: baseline only
    cum = richards_classic(RichardsParams(0.5, 100.0, 2.0, 0.0, 5.0), t)
    assert np.all(np.isfinite(cum))
    assert cum[1] == pytest.approx(100.5)


def test_parameter_validation():
    with pytest.raises(ValueError):
        RichardsParams(-0.1, 1.0, 0.5, 3.0, 1.0)
    with pytest.raises(ValueError):
        RichardsParams(0.1, -1.0, 0.5, 3.0, 1.0)
    with pytest.raises(ValueError):
        RichardsParams(0.1, 1.0, 0.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        RichardsParams(0.1, 1.0, 0.5, np.nan, 1.0)
    with pytest.raises(ValueError):
        RichardsParams(0.1, 1.0, 0.5, 3.0, 0.0)
    with pytest.raises(ValueError):
        trend_values(0.1, 1.0, 0.5, 3.0, 1.0, np.arange(3.0), "cubic")
