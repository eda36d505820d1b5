"""Independent reference values for the test suite, at 50-digit precision.

Everything here is computed straight from the defining formulas with mpmath,
with no imports from the package under test.  The printed values are frozen
as literals in tests/test_richards.py and tests/test_gmrf.py; rerun this
script if a literal ever needs to be re-derived:

    python3 scripts/oracles.py
"""

from mpmath import mp, mpf, exp, log, log1p, diff, matrix, det, pi

mp.dps = 50


def sigmoid(z):
    return 1 / (1 + exp(-z))


def classic(b, r, h, p, s, t):
    """b + r * (1 + exp(h*(p - t)))**(-s)"""
    return b + r * (1 + exp(h * (p - t))) ** (-s)


def linear_baseline(b, r, h, p, s, t):
    """b*t + r * (1 + exp(h*(p - t)))**(-s)"""
    return b * t + r * (1 + exp(h * (p - t))) ** (-s)


def exact_diff(b, r, h, p, s, t):
    """b + r * [F(t) - F(t-1)] with F the classic sigmoid component."""
    f = lambda u: (1 + exp(h * (p - u))) ** (-s)
    return b + r * (f(t) - f(t - 1))


def linearized(b, r, h, p, s, t):
    """b + r*s*h * sigmoid(z) * sigmoid(-z)**s at z = h*(p - t)."""
    z = h * (p - t)
    return b + r * s * h * sigmoid(z) * sigmoid(-z) ** s


PARAM_SETS = [
    ("A", (mpf("0.05"), mpf(23), mpf("0.62"), mpf(8), mpf("7.8"))),
    ("B", (mpf("1.2"), mpf(480), mpf("0.33"), mpf("12.5"), mpf("0.7"))),
    ("C", (mpf(0), mpf("5.5"), mpf("1.1"), mpf(3), mpf(1))),
]
T_POINTS = [mpf(0), mpf("4.75"), mpf(8), mpf(19)]


def show(name, fn):
    print(f"# {name}")
    for label, ps in PARAM_SETS:
        vals = [mp.nstr(fn(*ps, t), 17) for t in T_POINTS]
        print(f"  {label}: [{', '.join(vals)}]")


print("## growth-curve values at t = 0, 4.75, 8, 19")
show("classic", classic)
show("linear_baseline", linear_baseline)
show("exact_diff", exact_diff)
show("linearized", linearized)

print("\n## partial derivatives at set A, t = 5")
bA, rA, hA, pA, sA = PARAM_SETS[0][1]
t0 = mpf(5)
for name, fn in (("linearized", linearized), ("exact_diff", exact_diff)):
    dh = diff(lambda h: fn(bA, rA, h, pA, sA, t0), hA)
    dp = diff(lambda p: fn(bA, rA, hA, p, sA, t0), pA)
    ds = diff(lambda s: fn(bA, rA, hA, pA, s, t0), sA)
    print(f"  {name}: dh={mp.nstr(dh, 17)} dp={mp.nstr(dp, 17)} "
          f"ds={mp.nstr(ds, 17)}")

print("\n## symmetric-peak value b + r*h/4 at set C (s=1, t=p)")
print(f"  linearized(C, t=3) = {mp.nstr(linearized(*PARAM_SETS[2][1], mpf(3)), 17)}")
print(f"  b + r*h/4          = {mp.nstr(PARAM_SETS[2][1][0] + PARAM_SETS[2][1][1] * PARAM_SETS[2][1][2] / 4, 17)}")


# --- CAR-AR log density on a 3-node weighted path graph --------------------
# W has edges 0-1 (1.5) and 1-2 (0.7); degrees are the row sums.  One week
# given the previous is N(rho*phi_prev, (tau*(D - alpha*W))^{-1}); week one
# has zero mean.  Log density written out directly:
#   0.5*log det(tau*Q) - (G/2)*log(2*pi) - 0.5*(phi-m)' tau*Q (phi-m)

W = matrix([[0, mpf("1.5"), 0],
            [mpf("1.5"), 0, mpf("0.7")],
            [0, mpf("0.7"), 0]])
# degrees: row sums of W
D = matrix([[mpf("1.5"), 0, 0], [0, mpf("2.2"), 0], [0, 0, mpf("0.7")]])
ALPHA, RHO, TAU = mpf("0.6"), mpf("0.3"), mpf("2.5")
Q = D - ALPHA * W
PHI = [
    matrix([mpf("0.4"), mpf("-0.2"), mpf("0.9")]),
    matrix([mpf("-0.1"), mpf("0.5"), mpf("0.3")]),
    matrix([mpf("0.0"), mpf("-0.7"), mpf("0.2")]),
]


def mvn_lpdf(phi, mean):
    resid = phi - mean
    quad = (resid.T * (TAU * Q) * resid)[0, 0]
    return (mpf("0.5") * log(det(TAU * Q)) - mpf("1.5") * log(2 * pi)
            - mpf("0.5") * quad)


print("\n## CAR-AR dense log density, 3-node path (w01=1.5, w12=0.7),")
print("##   alpha=0.6, rho=0.3, tau=2.5")
zero = matrix([mpf(0)] * 3)
lp1 = mvn_lpdf(PHI[0], zero)
lp2 = mvn_lpdf(PHI[1], RHO * PHI[0])
lp3 = mvn_lpdf(PHI[2], RHO * PHI[1])
print(f"  week1 | zero : {mp.nstr(lp1, 17)}")
print(f"  week2 | week1: {mp.nstr(lp2, 17)}")
print(f"  week3 | week2: {mp.nstr(lp3, 17)}")
print(f"  3-week stack : {mp.nstr(lp1 + lp2 + lp3, 17)}")
print(f"  sparse gap (0.5*sum log d - 1.5*log 2pi): "
      f"{mp.nstr(mpf('0.5') * (log(mpf('1.5')) + log(mpf('2.2')) + log(mpf('0.7'))) - mpf('1.5') * log(2 * pi), 17)}")
