"""Dense symmetric eigensolver and spectrum comparisons.

``sym_eig`` reduces to tridiagonal form with Householder reflections,
finds all eigenvalues with implicit-shift QL and recovers the requested
top eigenvectors by inverse iteration on the tridiagonal matrix followed
by back-transformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .kernels import KernelMatrix

__all__ = [
    "SpectralSummary",
    "EigenError",
    "sym_eig",
    "eigvalsh",
    "tridiagonalize",
    "tridiagonal_eigenvalues",
    "align",
    "histogram_compare",
    "split_spikes",
    "common_edges",
]


class EigenError(ArithmeticError):
    """QL iteration failed to converge."""


# --------------------------------------------------------------------------
# Householder reduction
# --------------------------------------------------------------------------


@njit(cache=True)
def _tridiagonalize(A):
    """Reduce symmetric ``A`` (lower triangle used, overwritten) to tridiagonal form.

    Returns ``(d, e, R, betas)``: diagonal, subdiagonal, and the reflectors
    ``H_k = I - beta_k v_k v_k^T`` acting on indices ``k+1:`` (``v_k`` stored
    in row ``k`` of ``R`` from column ``k+1``), such that
    ``A = Q T Q^T`` with ``Q = H_0 H_1 ... H_{n-3}``.
    """
    n = A.shape[0]
    e = np.zeros(max(n - 1, 0))
    R = np.zeros((n, n))
    betas = np.zeros(n)
    v = np.empty(n)
    p = np.empty(n)
    w = np.empty(n)
    for k in range(n - 2):
        m = n - k - 1
        x0 = A[k + 1, k]
        tail = 0.0
        for i in range(1, m):
            tail += A[k + 1 + i, k] ** 2
        if tail == 0.0:
            e[k] = x0
            continue
        norm = math.sqrt(x0 * x0 + tail)
        alpha = -norm if x0 >= 0 else norm
        v[0] = x0 - alpha
        for i in range(1, m):
            v[i] = A[k + 1 + i, k]
        vv = v[0] * v[0] + tail
        beta = 2.0 / vv
        e[k] = alpha
        betas[k] = beta
        for i in range(m):
            R[k, k + 1 + i] = v[i]
        # p = beta * A22 v from the lower triangle
        for i in range(m):
            p[i] = 0.0
        for i in range(m):
            ii = k + 1 + i
            vi = v[i]
            s = A[ii, ii] * vi
            for j in range(i):
                a = A[ii, k + 1 + j]
                s += a * v[j]
                p[j] += a * vi
            p[i] += s
        pv = 0.0
        for i in range(m):
            p[i] *= beta
            pv += p[i] * v[i]
        half = 0.5 * beta * pv
        for i in range(m):
            w[i] = p[i] - half * v[i]
        for i in range(m):
            ii = k + 1 + i
            vi = v[i]
            wi = w[i]
            for j in range(i + 1):
                A[ii, k + 1 + j] -= vi * w[j] + wi * v[j]
    if n >= 2:
        e[n - 2] = A[n - 1, n - 2]
    d = np.empty(n)
    for i in range(n):
        d[i] = A[i, i]
    return d, e, R, betas


@njit(cache=True)
def _ql_implicit(d, e_sub, Z, want_vectors):
    """Implicit-shift QL on a symmetric tridiagonal matrix (in place on ``d``).

    Returns 0 on success, or ``l + 1`` for the index that failed to converge.
    """
    n = d.shape[0]
    e = np.zeros(n)
    for i in range(n - 1):
        e[i] = e_sub[i]
    eps = 2.220446049250313e-16
    # deflate against the global scale too, so clusters near zero converge
    tst = 0.0
    for i in range(n):
        tst = max(tst, abs(d[i]) + abs(e[i]))
    floor = eps * tst
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd or abs(e[m]) <= floor:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                return l + 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            early = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    early = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(Z.shape[0]):
                        f = Z[k, i + 1]
                        Z[k, i + 1] = s * Z[k, i] + c * f
                        Z[k, i] = c * Z[k, i] - s * f
                i -= 1
            if early:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


@njit(cache=True)
def _tridiag_solve(d, e, lam, rhs, tiny):
    """Solve ``(T - lam I) x = rhs`` by Gaussian elimination with partial pivoting."""
    n = d.shape[0]
    u0 = np.empty(n)
    u1 = np.zeros(n)
    u2 = np.zeros(n)
    mult = np.zeros(n)
    swap = np.zeros(n, dtype=np.bool_)
    u0[0] = d[0] - lam
    if n > 1:
        u1[0] = e[0]
    for i in range(n - 1):
        sub = e[i]
        a_next = d[i + 1] - lam
        b_next = e[i + 1] if i + 1 < n - 1 else 0.0
        if abs(u0[i]) >= abs(sub):
            piv = u0[i] if u0[i] != 0.0 else tiny
            u0[i] = piv
            mult[i] = sub / piv
            u0[i + 1] = a_next - mult[i] * u1[i]
            u1[i + 1] = b_next
        else:
            mult[i] = u0[i] / sub
            old1 = u1[i]
            u0[i] = sub
            u1[i] = a_next
            u2[i] = b_next
            u0[i + 1] = old1 - mult[i] * a_next
            u1[i + 1] = -mult[i] * b_next
            swap[i] = True
    if u0[n - 1] == 0.0:
        u0[n - 1] = tiny
    for i in range(n):
        if abs(u0[i]) < tiny:
            u0[i] = tiny if u0[i] >= 0 else -tiny
    x = rhs.copy()
    for i in range(n - 1):
        if swap[i]:
            t = x[i]
            x[i] = x[i + 1]
            x[i + 1] = t
        x[i + 1] -= mult[i] * x[i]
    x[n - 1] /= u0[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - u1[n - 2] * x[n - 1]) / u0[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / u0[i]
    return x


@njit(cache=True)
def _inverse_iteration(d, e, lams, seeds_rhs, tnorm):
    """Eigenvectors of the tridiagonal matrix for the eigenvalues ``lams`` (descending)."""
    n = d.shape[0]
    k = lams.shape[0]
    out = np.zeros((n, k))
    tiny = 2.220446049250313e-16 * max(tnorm, 1e-300)
    cluster = 1e-3 * max(tnorm, 1e-300)
    for c in range(k):
        lam = lams[c]
        x = seeds_rhs[:, c].copy()
        for it in range(5):
            x = _tridiag_solve(d, e, lam, x, tiny)
            # keep orthogonal to earlier vectors of the same cluster
            for q in range(c):
                if abs(lams[q] - lam) < cluster:
                    dot = 0.0
                    for i in range(n):
                        dot += out[i, q] * x[i]
                    for i in range(n):
                        x[i] -= dot * out[i, q]
            nrm = 0.0
            for i in range(n):
                nrm += x[i] * x[i]
            nrm = math.sqrt(nrm)
            for i in range(n):
                x[i] /= nrm
        for i in range(n):
            out[i, c] = x[i]
    return out


@njit(cache=True)
def _back_transform(R, betas, Y):
    n = R.shape[0]
    k = Y.shape[1]
    for h in range(n - 3, -1, -1):
        beta = betas[h]
        if beta == 0.0:
            continue
        for c in range(k):
            dot = 0.0
            for i in range(h + 1, n):
                dot += R[h, i] * Y[i, c]
            dot *= beta
            for i in range(h + 1, n):
                Y[i, c] -= dot * R[h, i]
    return Y


def _check_symmetric(A, tol=1e-10) -> np.ndarray:
    A = A.values if isinstance(A, KernelMatrix) else np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("need a square matrix")
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if np.max(np.abs(A - A.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def tridiagonalize(A):
    """Householder reduction; see :func:`_tridiagonalize` for the return layout."""
    A = _check_symmetric(A)
    return _tridiagonalize(np.array(A, dtype=float, order="C"))


def tridiagonal_eigenvalues(d, e) -> np.ndarray:
    d = np.array(d, dtype=float)
    info = _ql_implicit(d, np.asarray(e, dtype=float), np.zeros((0, 0)), False)
    if info:
        raise EigenError(f"QL iteration did not converge at index {info - 1}")
    return np.sort(d)


def eigvalsh(A) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    A = _check_symmetric(A)
    if A.shape[0] == 0:
        return np.zeros(0)
    d, e, _, _ = _tridiagonalize(np.array(A, dtype=float, order="C"))
    return tridiagonal_eigenvalues(d, e)


def _fix_signs(V):
    for c in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, c])))
        if V[i, c] < 0:
            V[:, c] = -V[:, c]
    return V


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------


def split_spikes(eigenvalues, factor: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Separate ``(bulk, spikes)``; spikes exceed ``median + factor * IQR``."""
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    q1, med, q3 = np.percentile(ev, [25, 50, 75])
    cut = med + factor * (q3 - q1)
    return ev[ev <= cut], ev[ev > cut]


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    eigenvalues: np.ndarray
    top_values: np.ndarray
    top_vectors: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    spikes: np.ndarray

    @property
    def bulk(self) -> np.ndarray:
        return self.eigenvalues[self.eigenvalues <= self.cutoff]

    @property
    def cutoff(self) -> float:
        if self.spikes.size:
            return float(np.nextafter(self.spikes.min(), -np.inf))
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    def histogram(self, edges) -> np.ndarray:
        counts, _ = np.histogram(np.clip(self.bulk, edges[0], edges[-1]), bins=edges)
        return counts


def sym_eig(A, k_top: int = 1, bins: int = 50, spike_factor: float = 10.0) -> SpectralSummary:
    """Full spectrum and the ``k_top`` leading eigenvectors of a symmetric matrix.

    Eigenvectors are columns of ``top_vectors`` ordered by decreasing
    eigenvalue, each signed so its largest-magnitude entry is positive.
    """
    A = _check_symmetric(A)
    n = A.shape[0]
    if not 0 <= k_top <= n:
        raise ValueError(f"k_top must lie in [0, {n}]")
    d, e, R, betas = _tridiagonalize(np.array(A, dtype=float, order="C"))
    ev = tridiagonal_eigenvalues(d, e)
    tnorm = float(np.max(np.abs(d)) + 2.0 * (np.max(np.abs(e)) if e.size else 0.0))
    top = ev[::-1][:k_top].copy()
    if k_top:
        rhs = np.random.default_rng(0).uniform(0.5, 1.5, size=(n, k_top))
        Y = _inverse_iteration(d, e, top, rhs, tnorm)
        V = _fix_signs(_back_transform(R, betas, Y))
    else:
        V = np.zeros((n, 0))
    bulk, spikes = split_spikes(ev, spike_factor)
    counts, edges = np.histogram(bulk, bins=bins)
    return SpectralSummary(ev, top, V, edges, counts, spikes)


def align(u, v, tol: float = 1e-8) -> float:
    """``|u^T v|`` for unit vectors."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError("vectors differ in length")
    for name, x in (("u", u), ("v", v)):
        if abs(np.linalg.norm(x) - 1.0) > tol:
            raise ValueError(f"{name} is not a unit vector")
    return float(min(1.0, abs(u @ v)))


def common_edges(Sa: SpectralSummary, Sb: SpectralSummary, bins: int = 50) -> np.ndarray:
    """Equal-width edges spanning the bulk of both spectra."""
    lo = min(Sa.bulk.min(), Sb.bulk.min())
    hi = max(Sa.bulk.max(), Sb.bulk.max())
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def histogram_compare(Sa: SpectralSummary, Sb: SpectralSummary, bins=50,
                      edges: Optional[np.ndarray] = None) -> float:
    """Total-variation distance between the normalized bulk histograms.

    ``bins`` may be a count (edges are then shared via :func:`common_edges`)
    or an explicit edge array.
    """
    if edges is None:
        edges = np.asarray(bins, dtype=float) if np.ndim(bins) else common_edges(Sa, Sb, int(bins))
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be increasing")
    ca = Sa.histogram(edges).astype(float)
    cb = Sb.histogram(edges).astype(float)
    if ca.sum() == 0 or cb.sum() == 0:
        raise ValueError("empty histogram")
    return float(0.5 * np.abs(ca / ca.sum() - cb / cb.sum()).sum())
