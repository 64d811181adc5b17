"""Expected random-features kernels, the bivariate normal CDF and centering.

All kernels take data as columns (``X`` of shape ``(p, n)``) and return
:class:`KernelMatrix` objects. ``center`` applies ``P K P`` with
``P = I - 11^T / n``.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, vectorize

from .data import Dataset
from .moments import Activation, RFFPair
from .weights import GAUSSIAN, WeightLaw, _draw, block_generator

__all__ = [
    "KernelMatrix",
    "KernelKind",
    "GaussianRFF",
    "ArcCos0",
    "ArcCos1",
    "TernaryExpected",
    "MonteCarlo",
    "DegenerateInput",
    "bvn_cdf",
    "center",
    "center_matrix",
    "expected_kernel",
    "monte_carlo_kernel",
    "empirical_vs_expected",
    "KERNEL_MAGIC",
]

KERNEL_MAGIC = b"KMX1"
_KHEADER = struct.Struct("<4sI")


class DegenerateInput(ValueError):
    """Angle-based kernels are undefined for zero-norm samples."""


# --------------------------------------------------------------------------
# kernel matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("kernel matrix must be square")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
        return bool(np.max(np.abs(self.values - self.values.T), initial=0.0) <= tol * scale)

    def to_bytes(self) -> bytes:
        iu = np.triu_indices(self.n)
        return _KHEADER.pack(KERNEL_MAGIC, self.n) + self.values[iu].astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, centered: bool = False) -> "KernelMatrix":
        magic, n = _KHEADER.unpack_from(data, 0)
        if magic != KERNEL_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        count = n * (n + 1) // 2
        if len(data) != _KHEADER.size + 8 * count:
            raise ValueError("kernel file size does not match its header")
        upper = np.frombuffer(data, dtype="<f8", offset=_KHEADER.size, count=count)
        K = np.zeros((n, n))
        K[np.triu_indices(n)] = upper
        K = K + np.triu(K, 1).T
        return cls(K, centered)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path, centered: bool = False) -> "KernelMatrix":
        return cls.from_bytes(Path(path).read_bytes(), centered)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.values:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def center_matrix(K: np.ndarray) -> np.ndarray:
    """``P K P`` without forming ``P``; the result is symmetrized."""
    K = np.asarray(K, dtype=float)
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    out = K - row - col + K.mean()
    return 0.5 * (out + out.T)


def center(Kraw: KernelMatrix) -> KernelMatrix:
    """Both-sided centering ``P K P``."""
    if not Kraw.is_symmetric(1e-10):
        raise ValueError("center expects a symmetric kernel matrix")
    return KernelMatrix(center_matrix(Kraw.values), centered=True)


# --------------------------------------------------------------------------
# bivariate normal CDF
# --------------------------------------------------------------------------

_GL_X = (
    np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
    np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
              0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
    np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
              0.07652652113349733]),
)
_GL_W = (
    np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
              0.2031674267230659, 0.2334925365383547, 0.2491470458134029]),
    np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
              0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
              0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
              0.1527533871307259]),
)
_X6, _X12, _X20 = _GL_X
_W6, _W12, _W20 = _GL_W


@njit(cache=True)
def _phid(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@njit(cache=True)
def _bvnu(dh, dk, r):
    """P(X > dh, Y > dk) for a standard bivariate normal with correlation r.

    Drezner-Wesolowsky single-integral reduction with Genz's double
    precision refinements for |r| close to 1.
    """
    if math.isinf(dh) or math.isinf(dk):
        if dh == math.inf or dk == math.inf:
            return 0.0
        if dh == -math.inf:
            return 1.0 if dk == -math.inf else _phid(-dk)
        return _phid(-dh)
    if r == 0.0:
        return _phid(-dh) * _phid(-dk)
    twopi = 2.0 * math.pi
    ar = abs(r)
    if ar < 0.3:
        x = _X6
        w = _W6
    elif ar < 0.75:
        x = _X12
        w = _W12
    else:
        x = _X20
        w = _W20
    lg = x.shape[0]
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(lg):
            sn = math.sin(asr * (1.0 - x[i]) / 2.0)
            bvn += w[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = math.sin(asr * (1.0 + x[i]) / 2.0)
            bvn += w[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * twopi) + _phid(-h) * _phid(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / as_ + hk) / 2.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                                           + c * d * as_ * as_ / 5.0)
            if -hk < 100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(twopi) * _phid(-b / a)
                bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            a = a / 2.0
            for i in range(lg):
                for sgn in (-1.0, 1.0):
                    xs = (a * (sgn * x[i] + 1.0)) ** 2
                    rs = math.sqrt(1.0 - xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + d * xs)
                        ep = math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                        bvn += a * w[i] * math.exp(asr) * (ep - sp)
            bvn = -bvn / twopi
        if r > 0.0:
            bvn += _phid(-max(h, k))
        else:
            bvn = -bvn + max(0.0, _phid(-h) - _phid(-k))
    return min(1.0, max(0.0, bvn))


@vectorize(["float64(float64, float64, float64)"], cache=True)
def _bvn_cdf_vec(h, k, rho):
    return _bvnu(-h, -k, rho)


def bvn_cdf(h, k, rho):
    """``P(Z1 <= h, Z2 <= k)`` for standard normals with correlation ``rho``.

    Broadcasts over array arguments; absolute accuracy is about 1e-15 for
    moderate correlations and better than 5e-9 everywhere.
    """
    rho_a = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho_a) > 1.0):
        raise ValueError("correlation must lie in [-1, 1]")
    out = _bvn_cdf_vec(np.asarray(h, dtype=float), np.asarray(k, dtype=float), rho_a)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# kernel kinds
# --------------------------------------------------------------------------


class KernelKind:
    """Base class of expected-kernel laws."""

    name = "kernel"


@dataclass(frozen=True)
class GaussianRFF(KernelKind):
    """Limit of cos/sin features with Gaussian weights: ``exp(-|x_i - x_j|^2 / 2)``."""

    name = "gaussian_rff"


@dataclass(frozen=True)
class ArcCos0(KernelKind):
    """Limit of step features with Gaussian weights: ``1/2 - theta / (2 pi)``."""

    name = "arccos0"


@dataclass(frozen=True)
class ArcCos1(KernelKind):
    """Limit of ReLU features with Gaussian weights (first-order arc-cosine kernel)."""

    name = "arccos1"


@dataclass(frozen=True)
class TernaryExpected(KernelKind):
    """Ternary activation with Gaussian projections ``(w^T x_i, w^T x_j)``.

    This is the large-``p`` limit of the ternary-weight kernel, since sparse
    ternary projections are asymptotically jointly Gaussian.
    """

    s_minus: float
    s_plus: float
    name = "ternary_expected"

    def __post_init__(self):
        if not self.s_minus <= self.s_plus:
            raise ValueError("need s_minus <= s_plus")

    @classmethod
    def from_thresholds(cls, thr) -> "TernaryExpected":
        return cls(float(thr.s_minus), float(thr.s_plus))


@dataclass(frozen=True)
class MonteCarlo(KernelKind):
    """Average of ``sigma(w^T x_i) sigma(w^T x_j)`` over ``m_mc`` weight draws (antithetic pairs)."""

    activation: Activation
    law: WeightLaw = GAUSSIAN
    m_mc: int = 100_000
    seed: int = 0
    name = "monte_carlo"


def _columns(data) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("need a nonempty (p, n) data matrix")
    return np.asarray(X, dtype=float)


def _norms_and_cos(X):
    G = X.T @ X
    sq = np.diag(G).copy()
    if np.any(sq <= 0):
        raise DegenerateInput(f"sample {int(np.argmin(sq))} has zero norm")
    nrm = np.sqrt(sq)
    cos = G / np.outer(nrm, nrm)
    np.clip(cos, -1.0, 1.0, out=cos)
    np.fill_diagonal(cos, 1.0)
    return nrm, cos, G


def _theta(cos):
    # arccos via atan2 keeps precision near collinear pairs
    sin = np.sqrt(np.clip(1.0 - cos * cos, 0.0, None))
    return np.arctan2(sin, cos), sin


def _ternary_kernel(X, s_minus, s_plus) -> np.ndarray:
    nrm, rho, _ = _norms_and_cos(X)
    am = s_minus / nrm
    ap = s_plus / nrm
    Am, Bm = am[:, None], am[None, :]
    Ap, Bp = ap[:, None], ap[None, :]
    both_hi = _bvn_cdf_vec(-Ap, -Bp, rho)
    both_lo = _bvn_cdf_vec(Am, Bm, rho)
    # P(U > a, V < b) = P(V < b) - P(U <= a, V < b)
    hi_lo = _ndtr(Bm) - _bvn_cdf_vec(Ap, Bm, rho)
    lo_hi = _ndtr(Am) - _bvn_cdf_vec(Am, Bp, rho)
    K = both_hi + both_lo - hi_lo - lo_hi
    return 0.5 * (K + K.T)


def _ndtr(x):
    from scipy.special import ndtr

    return ndtr(x)


def monte_carlo_kernel(
    activation: Activation,
    X,
    m_mc: int,
    seed: int = 0,
    law: WeightLaw = GAUSSIAN,
    return_se: bool = False,
    chunk: int = 2048,
):
    """Empirical kernel from ``m_mc`` weight draws arranged as antithetic pairs ``(w, -w)``.

    With ``return_se`` also returns the entrywise standard error, computed
    from the spread of the ``m_mc / 2`` independent pair averages (costs
    ``O(n^2 m_mc)`` extra work; use on small ``n``).
    """
    X = _columns(X)
    p, n = X.shape
    half = max(1, m_mc // 2)
    total = np.zeros((n, n))
    total_sq = np.zeros((n, n)) if return_se else None
    drawn = 0
    for b, start in enumerate(range(0, half, chunk)):
        c = min(chunk, half - start)
        W = _draw(law, block_generator(seed, b, 3), (c, p))
        pre = W @ X
        if isinstance(activation, RFFPair):
            # cos is even and sin odd: the antithetic pair average of cos.cos + sin.sin
            # equals the single-draw value
            C, S = np.cos(pre), np.sin(pre)
            total += C.T @ C + S.T @ S
            if return_se:
                vals = C[:, :, None] * C[:, None, :] + S[:, :, None] * S[:, None, :]
                total_sq += np.einsum("kij,kij->ij", vals, vals)
        else:
            Fp = np.asarray(activation(pre), dtype=float)
            Fm = np.asarray(activation(-pre), dtype=float)
            total += 0.5 * (Fp.T @ Fp + Fm.T @ Fm)
            if return_se:
                vals = 0.5 * (Fp[:, :, None] * Fp[:, None, :] + Fm[:, :, None] * Fm[:, None, :])
                total_sq += np.einsum("kij,kij->ij", vals, vals)
        drawn += c
    K = total / drawn
    K = 0.5 * (K + K.T)
    if not return_se:
        return K
    var = np.clip(total_sq / drawn - K * K, 0.0, None)
    return K, np.sqrt(var / drawn)


def expected_kernel(kind: KernelKind, data) -> KernelMatrix:
    """Raw (uncentered) expected kernel ``E_w[sigma(w^T x_i) sigma(w^T x_j)]``."""
    X = _columns(data)
    if isinstance(kind, GaussianRFF):
        sq = np.einsum("ij,ij->j", X, X)
        D = sq[:, None] + sq[None, :] - 2.0 * (X.T @ X)
        np.clip(D, 0.0, None, out=D)
        np.fill_diagonal(D, 0.0)
        K = np.exp(-0.5 * D)
    elif isinstance(kind, ArcCos1):
        nrm, cos, _ = _norms_and_cos(X)
        theta, sin = _theta(cos)
        K = np.outer(nrm, nrm) / (2.0 * math.pi) * (sin + (math.pi - theta) * cos)
    elif isinstance(kind, ArcCos0):
        _, cos, _ = _norms_and_cos(X)
        theta, _ = _theta(cos)
        K = 0.5 - theta / (2.0 * math.pi)
    elif isinstance(kind, TernaryExpected):
        K = _ternary_kernel(X, kind.s_minus, kind.s_plus)
    elif isinstance(kind, MonteCarlo):
        K = monte_carlo_kernel(kind.activation, X, kind.m_mc, kind.seed, kind.law)
    else:
        raise TypeError(f"unknown kernel kind {kind!r}")
    return KernelMatrix(0.5 * (K + K.T))


@dataclass(frozen=True)
class DeviationReport:
    max_abs: float
    frobenius: float
    frobenius_per_n: float

    def as_dict(self):
        return {"max_abs": self.max_abs, "frobenius": self.frobenius, "frobenius_per_n": self.frobenius_per_n}


def empirical_vs_expected(gram, expected) -> DeviationReport:
    """Deviation between the centered empirical Gram and the centered expected kernel."""
    G = gram.values if isinstance(gram, KernelMatrix) else np.asarray(gram, dtype=float)
    K = expected.values if isinstance(expected, KernelMatrix) else np.asarray(expected, dtype=float)
    if G.shape != K.shape:
        raise ValueError(f"size mismatch: {G.shape} vs {K.shape}")
    D = center_matrix(G) - center_matrix(K)
    fro = float(np.linalg.norm(D))
    return DeviationReport(float(np.max(np.abs(D), initial=0.0)), fro, fro / D.shape[0])
