"""Generalized Gaussian moments (d0, d1, d2) of activation functions.

For ``z ~ N(0, 1)`` and a scale ``tau > 0``::

    d0 = E[s^2(sqrt(tau) z)] - E[s(sqrt(tau) z)]^2 - tau * E[s'(sqrt(tau) z)]^2
    d1 = E[s'(sqrt(tau) z)]^2
    d2 = E[s''(sqrt(tau) z)]^2 / 4

Derivatives are taken in the weak sense, so they are never evaluated
numerically: the quadrature route uses the Gaussian integration-by-parts
identities

    E[s'(sqrt(tau) z)]  = E[z s(sqrt(tau) z)] / sqrt(tau)
    E[s''(sqrt(tau) z)] = E[(z^2 - 1) s(sqrt(tau) z)] / tau
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import ndtr

__all__ = [
    "Activation",
    "ReLU",
    "Abs",
    "LeakyCombo",
    "Quadratic",
    "GaussianBump",
    "Cos",
    "Sin",
    "Identity",
    "Sign",
    "Step",
    "RFFPair",
    "Ternary",
    "Custom",
    "GaussianMoments",
    "UnsupportedActivation",
    "QuadratureError",
    "activation_from_name",
    "builtin_activations",
    "hermite_rule",
    "moments_closed_form",
    "moments_quadrature",
    "moments_of",
    "moments_ternary_closed",
    "moments_ternary_alt",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# Gaussian mass beyond |z| = 12 is ~3.5e-33; tails of polynomially growing
# activations are negligible there.
_Z_CUT = 12.0


class UnsupportedActivation(ValueError):
    """Raised when a closed form is requested for an activation without one."""


class QuadratureError(ArithmeticError):
    """Raised when the activation returns a non-finite value at a node."""


# --------------------------------------------------------------------------
# activation kinds
# --------------------------------------------------------------------------


class Activation:
    """Base class for pointwise activations.

    Subclasses implement ``__call__`` on numpy arrays and list the points at
    which they are not smooth in ``breakpoints`` so quadrature can split
    the integration range there.
    """

    name: str = "activation"

    def __call__(self, t):
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple:
        return ()


@dataclass(frozen=True)
class ReLU(Activation):
    name = "relu"

    def __call__(self, t):
        return np.maximum(t, 0.0)

    @property
    def breakpoints(self):
        return (0.0,)


@dataclass(frozen=True)
class Abs(Activation):
    name = "abs"

    def __call__(self, t):
        return np.abs(t)

    @property
    def breakpoints(self):
        return (0.0,)


@dataclass(frozen=True)
class LeakyCombo(Activation):
    """``a_plus * max(0, t) + a_minus * max(0, -t)``."""

    a_plus: float = 1.0
    a_minus: float = 0.1
    name = "leaky"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.a_plus * np.maximum(t, 0.0) + self.a_minus * np.maximum(-t, 0.0)

    @property
    def breakpoints(self):
        return (0.0,)


@dataclass(frozen=True)
class Quadratic(Activation):
    """``a2 t^2 + a1 t + a0``."""

    a2: float = 1.0
    a1: float = 1.0
    a0: float = 0.0
    name = "quadratic"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return (self.a2 * t + self.a1) * t + self.a0


@dataclass(frozen=True)
class GaussianBump(Activation):
    """``exp(-t^2 / 2)``."""

    name = "gaussian_bump"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * t * t)


@dataclass(frozen=True)
class Cos(Activation):
    name = "cos"

    def __call__(self, t):
        return np.cos(t)


@dataclass(frozen=True)
class Sin(Activation):
    name = "sin"

    def __call__(self, t):
        return np.sin(t)


@dataclass(frozen=True)
class Identity(Activation):
    name = "identity"

    def __call__(self, t):
        return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Sign(Activation):
    name = "sign"

    def __call__(self, t):
        return np.sign(t).astype(float)

    @property
    def breakpoints(self):
        return (0.0,)


@dataclass(frozen=True)
class Step(Activation):
    """``1{t > 0}``, equivalently ``(1 + sign(t)) / 2`` almost everywhere."""

    name = "step"

    def __call__(self, t):
        return (np.asarray(t) > 0).astype(float)

    @property
    def breakpoints(self):
        return (0.0,)


@dataclass(frozen=True)
class RFFPair(Activation):
    """``[cos(t), sin(t)]``; moments are the sums over the two components."""

    name = "rff"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.cos(t), np.sin(t)])

    @property
    def components(self):
        return (Cos(), Sin())


@dataclass(frozen=True)
class Ternary(Activation):
    """``-1{t < s_minus} + 1{t > s_plus}``; the thresholds themselves map to 0."""

    s_minus: float = -1.0
    s_plus: float = 1.0
    name = "ternary"

    def __post_init__(self):
        if not self.s_minus <= self.s_plus:
            raise ValueError(
                f"ternary thresholds need s_minus <= s_plus, got ({self.s_minus}, {self.s_plus})"
            )

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return (t > self.s_plus).astype(float) - (t < self.s_minus).astype(float)

    @property
    def breakpoints(self):
        return (self.s_minus, self.s_plus)


@dataclass(frozen=True)
class Custom(Activation):
    """Wraps any vectorized pointwise function; only quadrature applies."""

    fn: Callable = field(compare=False)
    kinks: tuple = ()
    name = "custom"

    def __call__(self, t):
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)

    @property
    def breakpoints(self):
        return tuple(self.kinks)


_BY_NAME = {
    "relu": ReLU,
    "abs": Abs,
    "leaky": LeakyCombo,
    "quadratic": Quadratic,
    "gaussian_bump": GaussianBump,
    "cos": Cos,
    "sin": Sin,
    "identity": Identity,
    "sign": Sign,
    "step": Step,
    "arccos0": Step,
    "rff": RFFPair,
    "ternary": Ternary,
}


def activation_from_name(name: str, **params) -> Activation:
    """Resolve an activation by its lower-case name (``relu``, ``rff``, ...)."""
    key = name.strip().lower().replace("-", "_")
    try:
        cls = _BY_NAME[key]
    except KeyError:
        raise KeyError(f"unknown activation {name!r}; known: {sorted(_BY_NAME)}") from None
    return cls(**params)


def builtin_activations() -> list[Activation]:
    """One instance of every kind with a closed form, default parameters."""
    return [
        Abs(),
        ReLU(),
        LeakyCombo(1.0, 0.1),
        Quadratic(1.0, 1.0, 0.0),
        GaussianBump(),
        Cos(),
        Sin(),
        Identity(),
        Sign(),
        Step(),
        RFFPair(),
        Ternary(-0.5, 1.0),
    ]


# --------------------------------------------------------------------------
# moments container
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianMoments:
    """The (d0, d1, d2) fingerprint of an activation at scale ``tau``.

    ``aux`` holds ``(E[s], E[s^2], E[s'], E[s''])`` at ``sqrt(tau) z``; it is
    ``None`` for the cos/sin pair, whose moments are sums over components.
    """

    d0: float
    d1: float
    d2: float
    tau: float
    aux: Optional[tuple] = None

    @classmethod
    def from_aux(cls, mean, second, dmean, ddmean, tau):
        d0 = second - mean * mean - tau * dmean * dmean
        return cls(
            d0=float(d0),
            d1=float(dmean * dmean),
            d2=float(0.25 * ddmean * ddmean),
            tau=float(tau),
            aux=(float(mean), float(second), float(dmean), float(ddmean)),
        )

    def as_tuple(self):
        return (self.d0, self.d1, self.d2)

    def __add__(self, other: "GaussianMoments") -> "GaussianMoments":
        if not math.isclose(self.tau, other.tau, rel_tol=1e-14):
            raise ValueError("cannot add moments taken at different tau")
        return GaussianMoments(self.d0 + other.d0, self.d1 + other.d1, self.d2 + other.d2, self.tau)


def _check_tau(tau):
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive and finite, got {tau}")


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def moments_closed_form(kind: Activation, tau: float) -> GaussianMoments:
    """Closed-form moments for every built-in kind.

    Raises
    ------
    UnsupportedActivation
        For :class:`Custom`; use :func:`moments_quadrature` instead.
    """
    _check_tau(tau)
    rt = math.sqrt(tau)
    g0 = 1.0 / _SQRT_2PI  # standard normal pdf at 0

    if isinstance(kind, Custom):
        raise UnsupportedActivation("custom activations have no closed form; use moments_quadrature")
    if isinstance(kind, RFFPair):
        cos_m = moments_closed_form(Cos(), tau)
        sin_m = moments_closed_form(Sin(), tau)
        return cos_m + sin_m
    if isinstance(kind, Ternary):
        return moments_ternary_closed(kind.s_minus, kind.s_plus, tau)

    if isinstance(kind, ReLU):
        aux = (rt * g0, tau / 2, 0.5, g0 / rt)
    elif isinstance(kind, Abs):
        aux = (2 * rt * g0, tau, 0.0, 2 * g0 / rt)
    elif isinstance(kind, LeakyCombo):
        ap, am = kind.a_plus, kind.a_minus
        aux = ((ap + am) * rt * g0, (ap * ap + am * am) * tau / 2, (ap - am) / 2, (ap + am) * g0 / rt)
    elif isinstance(kind, Quadratic):
        a2, a1, a0 = kind.a2, kind.a1, kind.a0
        mean = a2 * tau + a0
        second = 3 * a2 * a2 * tau * tau + (a1 * a1 + 2 * a2 * a0) * tau + a0 * a0
        aux = (mean, second, a1, 2 * a2)
    elif isinstance(kind, GaussianBump):
        aux = (1 / math.sqrt(1 + tau), 1 / math.sqrt(1 + 2 * tau), 0.0, -((1 + tau) ** -1.5))
    elif isinstance(kind, Cos):
        e = math.exp(-tau / 2)
        aux = (e, (1 + math.exp(-2 * tau)) / 2, 0.0, -e)
    elif isinstance(kind, Sin):
        e = math.exp(-tau / 2)
        aux = (0.0, (1 - math.exp(-2 * tau)) / 2, e, 0.0)
    elif isinstance(kind, Identity):
        aux = (0.0, tau, 1.0, 0.0)
    elif isinstance(kind, Sign):
        aux = (0.0, 1.0, 2 * g0 / rt, 0.0)
    elif isinstance(kind, Step):
        aux = (0.5, 0.5, g0 / rt, 0.0)
    else:
        raise UnsupportedActivation(f"no closed form for {type(kind).__name__}")
    return GaussianMoments.from_aux(*aux, tau)


def _norm_pdf(x):
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def moments_ternary_closed(s_minus: float, s_plus: float, tau: float) -> GaussianMoments:
    """Exact moments of the ternary activation with thresholds ``s_minus <= s_plus``.

    With ``a = s_minus / sqrt(tau)`` and ``b = s_plus / sqrt(tau)``:
    ``E[s] = 1 - Phi(b) - Phi(a)``, ``E[s^2] = 1 - Phi(b) + Phi(a)``,
    ``E[s'] = (phi(a) + phi(b)) / sqrt(tau)`` and
    ``E[s''] = (a phi(a) + b phi(b)) / tau``.
    """
    _check_tau(tau)
    if not s_minus <= s_plus:
        raise ValueError(f"need s_minus <= s_plus, got ({s_minus}, {s_plus})")
    rt = math.sqrt(tau)
    a, b = s_minus / rt, s_plus / rt
    pa, pb = _norm_pdf(a), _norm_pdf(b)
    Fa, Fb_up = float(ndtr(a)), float(ndtr(-b))
    return GaussianMoments.from_aux(
        Fb_up - Fa,
        Fb_up + Fa,
        (pa + pb) / rt,
        (a * pa + b * pb) / tau,
        tau,
    )


def moments_ternary_alt(s_minus: float, s_plus: float, tau: float) -> tuple[float, float]:
    """(d1, d2) of the ternary activation from an alternative form of the threshold equations.

    Kept for comparison only. These constants do not agree with the exact
    weak-derivative moments (at ``s_minus = s_plus = 0`` they give
    ``d1 = 4 / pi^2`` instead of ``2 / (pi tau)``); use
    :func:`moments_ternary_closed` for anything quantitative.
    """
    _check_tau(tau)
    ep = math.exp(-s_plus * s_plus / tau)
    em = math.exp(-s_minus * s_minus / tau)
    d1 = (ep + em) ** 2 / math.pi**2
    d2 = (s_plus * ep + s_minus * em) ** 2 / (2 * math.pi * tau**3)
    return d1, d2


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

_rule_cache: dict = {}
_rule_lock = threading.Lock()


def hermite_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite rule for the standard normal density (weights sum to 1).

    Nodes are eigenvalues of the Jacobi matrix of the probabilists' Hermite
    recurrence (Golub-Welsch); weights are squared first eigenvector
    components. Cached per node count.
    """
    if nodes < 1:
        raise ValueError("need at least one node")
    rule = _rule_cache.get(("hermite", nodes))
    if rule is not None:
        return rule
    with _rule_lock:
        rule = _rule_cache.get(("hermite", nodes))
        if rule is None:
            off = np.sqrt(np.arange(1, nodes, dtype=float))
            x, v = eigh_tridiagonal(np.zeros(nodes), off)
            w = v[0, :] ** 2
            w /= w.sum()
            # symmetrize: the rule is exactly symmetric, rounding is not
            x = 0.5 * (x - x[::-1])
            w = 0.5 * (w + w[::-1])
            x.setflags(write=False)
            w.setflags(write=False)
            rule = (x, w)
            _rule_cache[("hermite", nodes)] = rule
    return rule


def _legendre_rule(nodes: int):
    rule = _rule_cache.get(("legendre", nodes))
    if rule is None:
        with _rule_lock:
            x, w = np.polynomial.legendre.leggauss(nodes)
            rule = (x, w)
            _rule_cache[("legendre", nodes)] = rule
    return rule


def _split_rule(cuts: Sequence[float], nodes: int):
    """Piecewise Gauss-Legendre rule for N(0,1) on [-_Z_CUT, _Z_CUT] split at ``cuts``."""
    edges = sorted({-_Z_CUT, _Z_CUT, *(c for c in cuts if -_Z_CUT < c < _Z_CUT)})
    xs, ws = [], []
    gx, gw = _legendre_rule(nodes)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo < 1e-300:
            continue
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        z = mid + half * gx
        xs.append(z)
        ws.append(half * gw * np.exp(-0.5 * z * z) / _SQRT_2PI)
    return np.concatenate(xs), np.concatenate(ws)


def moments_quadrature(
    sigma: Callable,
    tau: float,
    nodes: int = 256,
    breakpoints: Optional[Sequence[float]] = None,
) -> GaussianMoments:
    """Moments of an arbitrary pointwise activation by quadrature.

    Parameters
    ----------
    sigma : callable
        Vectorized pointwise function. Only evaluated, never differentiated.
    tau : float
        Variance of the argument ``sqrt(tau) z``.
    nodes : int
        Gauss-Hermite node count, or Gauss-Legendre nodes per segment when
        ``breakpoints`` are given. At least 32.
    breakpoints : sequence of float, optional
        Points (in the activation's own argument) where ``sigma`` is not
        smooth. When given, the Gaussian integral is split there and each
        piece integrated by Gauss-Legendre, which keeps full accuracy for
        kinks and jumps. Defaults to ``sigma.breakpoints`` if present.

    Raises
    ------
    QuadratureError
        If ``sigma`` is not finite at some node.
    """
    _check_tau(tau)
    if nodes < 32:
        raise ValueError("moments_quadrature needs at least 32 nodes")
    if breakpoints is None:
        breakpoints = getattr(sigma, "breakpoints", ())
    rt = math.sqrt(tau)
    if breakpoints:
        z, w = _split_rule([b / rt for b in breakpoints], nodes)
    else:
        z, w = hermite_rule(nodes)
    vals = np.asarray(sigma(rt * z), dtype=float)
    if vals.shape != z.shape:
        raise ValueError("sigma must map arrays elementwise; use moments_of for the cos/sin pair")
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise QuadratureError(f"activation is {vals[i]} at node z={z[i]!r} (argument {rt * z[i]!r})")
    mean = float(w @ vals)
    second = float(w @ (vals * vals))
    dmean = float(w @ (z * vals)) / rt
    ddmean = float(w @ ((z * z - 1.0) * vals)) / tau
    return GaussianMoments.from_aux(mean, second, dmean, ddmean, tau)


def moments_of(kind: Activation, tau: float, nodes: int = 256) -> GaussianMoments:
    """Quadrature moments for any :class:`Activation`, including the cos/sin pair."""
    if isinstance(kind, RFFPair):
        parts = [moments_quadrature(c, tau, nodes) for c in kind.components]
        return parts[0] + parts[1]
    return moments_quadrature(kind, tau, nodes, breakpoints=kind.breakpoints)
