"""Independent reference values shared by the tests.

Everything here is written out from first principles, without calling into
``trf``, so the tests compare the package against an outside computation.
"""

import math

import numpy as np
from scipy import integrate, stats

PI = math.pi


def closed_form_moments(name, tau, a_plus=1.0, a_minus=0.1, a2=1.0, a1=1.0, a0=0.0):
    """Closed forms of ``(d0, d1, d2)`` keyed by activation name."""
    e = math.exp(-tau)
    rows = {
        "abs": (tau * (1 - 2 / PI), 0.0, 1 / (2 * PI * tau)),
        "relu": (tau / 2 * (0.5 - 1 / PI), 0.25, 1 / (8 * PI * tau)),
        "leaky": (
            tau * (a_plus + a_minus) ** 2 * (PI - 2) / (4 * PI),
            (a_plus - a_minus) ** 2 / 4,
            (a_plus + a_minus) ** 2 / (8 * PI * tau),
        ),
        "quadratic": (2 * tau**2 * a2**2, a1**2, a2**2),
        "gaussian_bump": (1 / math.sqrt(2 * tau + 1) - 1 / (tau + 1), 0.0, 1 / (4 * (tau + 1) ** 3)),
        "cos": ((1 + math.exp(-2 * tau)) / 2 - e, 0.0, e / 4),
        "sin": ((1 - math.exp(-2 * tau)) / 2 - tau * e, e, 0.0),
        "identity": (0.0, 1.0, 0.0),
        "sign": (1 - 2 / PI, 2 / (PI * tau), 0.0),
        "step": (0.25 - 1 / (2 * PI), 1 / (2 * PI * tau), 0.0),
    }
    if name == "rff":
        c, s = rows["cos"], rows["sin"]
        return tuple(x + y for x, y in zip(c, s))
    return rows[name]


def gaussian_moments_by_quad(sigma, tau, cuts=()):
    """``(d0, d1, d2)`` of ``sigma`` by adaptive quadrature and the Stein identities."""
    rt = math.sqrt(tau)
    pts = sorted({-12.0, 12.0, *[c / rt for c in cuts if abs(c / rt) < 12]})

    def E(f):
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            total += integrate.quad(lambda z: f(z) * stats.norm.pdf(z), a, b,
                                    epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        return total

    m1 = E(lambda z: sigma(rt * z))
    m2 = E(lambda z: sigma(rt * z) ** 2)
    g1 = E(lambda z: z * sigma(rt * z)) / rt
    g2 = E(lambda z: (z * z - 1) * sigma(rt * z)) / tau
    return m2 - m1 * m1 - tau * g1 * g1, g1 * g1, g2 * g2 / 4


def bvn_cdf_by_quad(h, k, rho):
    """``P(Z1 <= h, Z2 <= k)`` as a one-dimensional integral over ``Z1``."""
    if abs(rho) == 1.0:
        return stats.norm.cdf(min(h, k)) if rho > 0 else max(0.0, stats.norm.cdf(h) - stats.norm.cdf(-k))
    s = math.sqrt(1 - rho * rho)
    f = lambda x: stats.norm.pdf(x) * stats.norm.cdf((k - rho * x) / s)
    return integrate.quad(f, -np.inf, h, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def ternary_prob_kernel(u_scale, v_scale, rho, s_minus, s_plus):
    """``E[t(u) t(v)]`` for ternary ``t`` and jointly Gaussian ``(u, v)``, by 2-d quadrature."""

    def t(x):
        return float(x > s_plus) - float(x < s_minus)

    s = math.sqrt(max(1 - rho * rho, 0.0))

    def inner(z1):
        u = u_scale * z1
        tu = t(u)
        if tu == 0:
            return 0.0
        # E over z2 of t(v_scale (rho z1 + s z2))
        mu = v_scale * rho * z1
        sd = v_scale * s
        if sd == 0:
            return tu * t(mu)
        p_plus = stats.norm.sf((s_plus - mu) / sd)
        p_minus = stats.norm.cdf((s_minus - mu) / sd)
        return tu * (p_plus - p_minus)

    cuts = sorted({-12.0, 12.0, s_minus / u_scale, s_plus / u_scale})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a < b:
            total += integrate.quad(lambda z: inner(z) * stats.norm.pdf(z), a, b,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


def dense_ternary_reference(W_dense, X, scale, s_minus, s_plus):
    """Sequential sum of ``+-X[k]`` in increasing ``k``, one scaling, then thresholding."""
    acc = np.zeros((W_dense.shape[0], X.shape[1]))
    for k in range(W_dense.shape[1]):
        col = W_dense[:, k:k + 1]
        acc = acc + np.where(col > 0, X[k], np.where(col < 0, -X[k], 0.0))
    v = acc * scale
    return np.where(v > s_plus, 1.0, np.where(v < s_minus, -1.0, 0.0))
