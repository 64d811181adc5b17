"""Structured asymptotic equivalent of a centered random-features kernel on mixture data.

For mixture data ``x_i = mu_a / sqrt(p) + z_i`` the centered expected
kernel ``K = P kappa(X) P`` is approximated by

    K~ = P (d1 (Z + M J^T / sqrt(p))^T (Z + M J^T / sqrt(p)) + d2 V A V^T + d0 I) P

with ``V = [J / sqrt(p), phi]`` and ``A = [[t t^T + 2 T, t], [t^T, 1]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .data import GmmStats
from .kernels import KernelMatrix, center_matrix
from .moments import GaussianMoments

__all__ = [
    "EquivalentModel",
    "UnsupportedInput",
    "build_equivalent",
    "equivalence_gap",
    "corollary_shift",
    "spectral_norm",
    "lanczos_extreme",
    "GapReport",
    "ShiftReport",
]


class UnsupportedInput(ValueError):
    """The equivalent needs the synthetic-only statistics ``Z`` and ``phi``."""


@dataclass(frozen=True, eq=False)
class EquivalentModel:
    d: GaussianMoments
    stats: GmmStats
    Ktilde: KernelMatrix
    linear_part: np.ndarray
    quadratic_part: np.ndarray
    shift_part: np.ndarray
    V: np.ndarray
    A: np.ndarray

    @property
    def parts(self) -> tuple:
        return self.linear_part, self.quadratic_part, self.shift_part


def _block_matrix(stats: GmmStats) -> tuple[np.ndarray, np.ndarray]:
    p = stats.p
    t = np.asarray(stats.t, dtype=float)
    K = t.size
    A = np.empty((K + 1, K + 1))
    A[:K, :K] = np.outer(t, t) + 2.0 * stats.T
    A[:K, K] = t
    A[K, :K] = t
    A[K, K] = 1.0
    V = np.hstack([stats.J / math.sqrt(p), np.asarray(stats.phi, dtype=float)[:, None]])
    return V, A


def build_equivalent(stats: GmmStats, d: GaussianMoments) -> EquivalentModel:
    """Materialize ``K~`` and its three centered addends."""
    if stats.Z is None or stats.phi is None:
        raise UnsupportedInput("file-origin data carries no noise matrix Z or phi")
    n, p = stats.n, stats.p
    Y = stats.Z + stats.M @ stats.J.T / math.sqrt(p)
    linear = center_matrix(d.d1 * (Y.T @ Y))
    V, A = _block_matrix(stats)
    quadratic = center_matrix(d.d2 * (V @ A @ V.T))
    shift = d.d0 * (np.eye(n) - 1.0 / n)
    total = linear + quadratic + shift
    return EquivalentModel(d, stats, KernelMatrix(0.5 * (total + total.T), centered=True),
                           linear, quadratic, shift, V, A)


# --------------------------------------------------------------------------
# spectral norm
# --------------------------------------------------------------------------


def lanczos_extreme(A: np.ndarray, iters: int = 50, tol: float = 1e-8, seed: int = 0,
                    max_iters: int = 300) -> tuple[float, float]:
    """Smallest and largest eigenvalue of symmetric ``A`` by Lanczos with full reorthogonalization.

    Runs at least ``iters`` steps and keeps going (up to ``max_iters``) until
    the Ritz residuals of both extreme pairs fall below ``tol * |theta|``.
    """
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0]), float(A[0, 0])
    steps = min(n, max_iters)
    Q = np.zeros((n, steps + 1))
    alpha = np.zeros(steps)
    beta = np.zeros(steps)
    q = np.random.default_rng(seed).standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    lo = hi = 0.0
    for j in range(steps):
        w = A @ Q[:, j]
        alpha[j] = Q[:, j] @ w
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta[j] = np.linalg.norm(w)
        k = j + 1
        theta, S = _tridiag_eig(alpha[:k], beta[: k - 1])
        lo, hi = theta[0], theta[-1]
        if beta[j] <= 1e-14 * max(abs(lo), abs(hi), 1e-300):
            break
        if k >= iters:
            scale = max(abs(lo), abs(hi))
            if beta[j] * max(abs(S[-1, 0]), abs(S[-1, -1])) <= tol * scale:
                break
        Q[:, j + 1] = w / beta[j]
    return float(lo), float(hi)


def _tridiag_eig(a, b):
    from scipy.linalg import eigh_tridiagonal

    if a.size == 1:
        return a.copy(), np.ones((1, 1))
    return eigh_tridiagonal(a, b)


def spectral_norm(A: np.ndarray, dense_limit: int = 1024) -> float:
    """Largest absolute eigenvalue of a symmetric matrix.

    Uses the full in-house eigensolver for ``n <= dense_limit`` and Lanczos
    beyond.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] <= dense_limit:
        from .spectral import eigvalsh

        ev = eigvalsh(A)
        return float(max(abs(ev[0]), abs(ev[-1])))
    lo, hi = lanczos_extreme(A)
    return max(abs(lo), abs(hi))


@dataclass(frozen=True)
class GapReport:
    spectral: float
    relative: float
    frobenius: float

    def as_dict(self):
        return {"spectral": self.spectral, "relative": self.relative, "frobenius": self.frobenius}


def _values(K) -> np.ndarray:
    return K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)


def equivalence_gap(K, model) -> GapReport:
    """``||K - K~||`` in spectral norm, relative to ``||K~||``, and in Frobenius norm."""
    Kv = _values(K)
    Kt = _values(model.Ktilde if isinstance(model, EquivalentModel) else model)
    if Kv.shape != Kt.shape:
        raise ValueError(f"size mismatch: {Kv.shape} vs {Kt.shape}")
    D = Kv - Kt
    D = 0.5 * (D + D.T)
    gap = spectral_norm(D)
    ref = spectral_norm(Kt)
    return GapReport(gap, gap / ref if ref > 0 else math.inf, float(np.linalg.norm(D)))


@dataclass(frozen=True)
class ShiftReport:
    lam: float
    gap: float
    relative_gap: float
    unshifted_gap: float
    unshifted_relative: float
    lam_star: float
    gap_star: float

    def as_dict(self):
        return dict(self.__dict__)


def corollary_shift(Ka, Kb, d0a: float, d0b: float, scan: int = 41) -> ShiftReport:
    """Compare ``Ka`` with ``Kb + lambda P`` at ``lambda = d0a - d0b``.

    Also locates ``lambda* = argmin ||Ka - Kb - lambda P||`` by a coarse scan
    followed by bounded scalar refinement. Relative gaps are taken with
    respect to ``||Ka||``.
    """
    A, B = _values(Ka), _values(Kb)
    if A.shape != B.shape:
        raise ValueError(f"size mismatch: {A.shape} vs {B.shape}")
    n = A.shape[0]
    D = A - B
    D = 0.5 * (D + D.T)
    ref = spectral_norm(A)
    ones = np.full(n, 1.0 / math.sqrt(n))
    Dv = D @ ones
    if np.linalg.norm(Dv) <= 1e-9 * max(1.0, np.abs(D).max()) * math.sqrt(n):
        # centered D commutes with P: lambda shifts the spectrum on 1-perp only,
        # which we read off once by pushing the 1-direction far above it
        big = 4.0 * (np.abs(D).sum(axis=1).max() + 1.0)
        from .spectral import eigvalsh

        ev = eigvalsh(D + big * np.outer(ones, ones))[:-1]
        lo_d, hi_d = float(ev[0]), float(ev[-1])

        def gap(lam):
            return max(abs(hi_d - lam), abs(lo_d - lam))
    else:
        P = np.eye(n) - 1.0 / n
        lo_d, hi_d = lanczos_extreme(D) if n > 1024 else _dense_extremes(D)

        def gap(lam):
            return spectral_norm(D - lam * P)

    lam = d0a - d0b
    g, g0 = gap(lam), gap(0.0)
    grid = np.linspace(min(lo_d, 0.0), max(hi_d, 0.0), scan)
    vals = [gap(x) for x in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, scan - 1)]
    lam_star, g_star = float(grid[i]), float(vals[i])
    if b > a:
        res = minimize_scalar(gap, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(a), abs(b))})
        if res.fun <= g_star:
            lam_star, g_star = float(res.x), float(res.fun)
    return ShiftReport(lam, g, g / ref, g0, g0 / ref, lam_star, g_star)


def _dense_extremes(D):
    from .spectral import eigvalsh

    ev = eigvalsh(D)
    return float(ev[0]), float(ev[-1])
