"""Regenerates the frozen oracle tables in this directory.

Independent of the Rust code paths: the torus Green function is summed as a
one-dimensional cosh series, special functions come from mpmath, and the radial
flux uses scipy's DOP853 in the plain radial variable.
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp

mp.mp.dps = 30
HERE = Path(__file__).parent


def green_series(x, y, terms=None):
    """G(x, y) on the unit torus with -ΔG = δ - 1 and zero mean, plus its gradient.

    Uses the closed-form 1D Green function in x for every y-mode:
    g_0(x) = (x² - |x| + 1/6)/2 and g_k(x) = cosh(q(|x| - 1/2)) / (2q sinh(q/2)), q = 2π|k|.
    """
    x = mp.mpf(x) - mp.floor(mp.mpf(x) + mp.mpf(1) / 2)
    y = mp.mpf(y) - mp.floor(mp.mpf(y) + mp.mpf(1) / 2)
    ax = abs(x)
    sx = 1 if x >= 0 else -1
    val = (x * x - ax + mp.mpf(1) / 6) / 2
    gx = (2 * x - sx) / 2
    gy = mp.mpf(0)
    k = 1
    while True:
        q = 2 * mp.pi * k
        # 2 cos(2πky) cosh(q(|x| - 1/2)) / (2q sinh(q/2)), stable for large q
        a = (mp.exp(q * (ax - 1)) + mp.exp(-q * ax)) / (1 - mp.exp(-q))
        term = mp.cos(q * y) * a / q
        dterm_x = sx * mp.cos(q * y) * (mp.exp(q * (ax - 1)) - mp.exp(-q * ax)) / (1 - mp.exp(-q))
        dterm_y = -mp.sin(q * y) * a
        val += term
        gx += dterm_x
        gy += dterm_y
        if abs(a) < mp.mpf(10) ** -28 and (terms is None or k >= terms):
            break
        k += 1
    return val, gx, gy


def regular_at_origin():
    """γ(0) for the unit square torus from the Kronecker limit formula."""
    q = mp.exp(-2 * mp.pi)
    eta = mp.exp(-2 * mp.pi / 24) * mp.qp(q)
    return -mp.log(2 * mp.pi * eta**2) / (2 * mp.pi)


def green_table():
    points = [
        (0.5, 0.5),
        (0.25, 0.0),
        (0.1, 0.2),
        (0.37, -0.11),
        (0.05, 0.03),
        (-0.31, 0.44),
        (0.49, -0.02),
        (0.013, 0.0),
    ]
    rows = []
    for d in points:
        # Sum along the larger coordinate so the cosh series decays fast.
        if abs(d[0]) >= abs(d[1]):
            g, gx, gy = green_series(d[0], d[1])
        else:
            g, gy, gx = green_series(d[1], d[0])
        rows.append({"d": list(d), "g": float(g), "grad": [float(gx), float(gy)]})
    gamma0 = regular_at_origin()
    # Cross-check the closed form against the series: γ(d) - |d|²/4 → γ(0) with an O(|d|⁴) remainder.
    r = mp.mpf("0.02")
    g, _, _ = green_series(r, 0)
    series_gamma0 = g + mp.log(r) / (2 * mp.pi) - r * r / 4
    assert abs(series_gamma0 - gamma0) < 1e-6, (series_gamma0, gamma0)
    return {"displacements": rows, "gamma_origin": float(gamma0)}


def special_table():
    zs = [1e-6, 0.01, 0.3, 1.0, 2.5, 5.0, 7.5, 20.0, 60.0]
    xs = [1e-3, 0.1, 0.7, 1.0, 3.0, 10.0, 45.0, 200.0]
    return {
        "ein": [[z, float(mp.e1(z) + mp.log(z) + mp.euler)] for z in zs],
        "e1": [[z, float(mp.e1(z))] for z in zs],
        "k0_scaled": [[x, float(mp.exp(x) * mp.besselk(0, x))] for x in xs],
        "k1_scaled": [[x, float(mp.exp(x) * mp.besselk(1, x))] for x in xs],
        "i0_scaled": [[x, float(mp.exp(-x) * mp.besseli(0, x))] for x in xs + [0.0]],
        "i1_scaled": [[x, float(mp.exp(-x) * mp.besseli(1, x))] for x in xs + [0.0]],
    }


def beta(s):
    """Total flux of the radial bubble with u(0) = s, by quadrature and by r u'(r) at blow-down."""
    r0 = 1e-4
    g = np.exp(s) * (1 - np.exp(s))
    y0 = [s - g * r0**2 / 4, -g * r0 / 2, np.pi * r0**2 * g]

    def f(r, y):
        e = np.exp(y[0])
        gg = e * (1 - e)
        return [y[1], -y[1] / r - gg, 2 * np.pi * r * gg]

    def blow(r, y):
        return y[0] + 80

    blow.terminal = True
    sol = solve_ivp(f, [r0, 1e12], y0, rtol=1e-12, atol=1e-14, method="DOP853", events=blow)
    r = sol.t[-1]
    _, du, q = sol.y[:, -1]
    return float(q), float(-2 * np.pi * r * du)


def beta_table():
    rows = []
    for s in [-15.0, -10.0, -5.0, -2.0, -1.0, -0.5, -0.1, -0.05]:
        q, lim = beta(s)
        rows.append({"s": s, "quadrature": q, "limit": lim})
    return {"rows": rows}


def main():
    tables = {"green.json": green_table(), "special.json": special_table(), "beta.json": beta_table()}
    for name, data in tables.items():
        (HERE / name).write_text(json.dumps(data, indent=2) + "\n")


if __name__ == "__main__":
    main()
