"""Threshold calibration, ternary weights and multiplication-free features.

The ternary pipeline is:

1. estimate ``tau`` from the data (:func:`trf.data.estimate_tau`),
2. :func:`solve_thresholds` so the ternary activation has the target
   ``(d1, d2)`` at that ``tau``,
3. :func:`sample_ternary_weights` into sign/mask bitplanes,
4. :func:`ternary_transform` (adds/subtracts only) and :func:`gram`
   (popcounts only).
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import bits, opcount
from .data import Dataset, RejectedInput
from .moments import Activation, RFFPair, Ternary, moments_ternary_closed
from .weights import block_generator

__all__ = [
    "CalibrationError",
    "Thresholds",
    "solve_thresholds",
    "TernaryWeightSpec",
    "PackedTernaryMatrix",
    "sample_ternary_weights",
    "ternary_transform",
    "dense_transform",
    "gram",
    "cross_gram",
    "feature_bits",
    "PACKED_MAGIC",
]

PACKED_MAGIC = b"TRF1"
_HEADER = struct.Struct("<4sIId")
_SUCCESS_TOL = 1e-8

FeatureMatrix = Union[np.ndarray, "PackedTernaryMatrix"]


class CalibrationError(ArithmeticError):
    """No thresholds reach the target moments; ``best`` holds the closest pair found."""

    def __init__(self, message, best: "Thresholds"):
        super().__init__(message)
        self.best = best


# --------------------------------------------------------------------------
# thresholds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    s_minus: float
    s_plus: float
    tau: float
    target: tuple
    residual: float

    def __post_init__(self):
        if not self.s_minus <= self.s_plus:
            raise ValueError("s_minus must not exceed s_plus")

    @property
    def success(self) -> bool:
        return self.residual <= _SUCCESS_TOL

    def activation(self) -> Ternary:
        return Ternary(self.s_minus, self.s_plus)

    def as_dict(self) -> dict:
        return {
            "s_minus": self.s_minus,
            "s_plus": self.s_plus,
            "tau": self.tau,
            "target_d1": self.target[0],
            "target_d2": self.target[1],
            "residual": self.residual,
            "success": self.success,
        }


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _objective(sm, sp, tau, t1, t2) -> float:
    """Squared relative mismatch of (d1, d2); absolute for a zero target."""
    d = moments_ternary_closed(min(sm, sp), max(sm, sp), tau)
    r1 = d.d1 / t1 - 1.0 if t1 > 0 else d.d1
    r2 = d.d2 / t2 - 1.0 if t2 > 0 else d.d2
    return r1 * r1 + r2 * r2


def _symmetric_root(t1, tau):
    """``s`` with ``d1(-s, s) = t1``, where it exists; ``d2`` vanishes by symmetry."""
    # (2 phi(s / sqrt(tau)))^2 / tau = t1
    q = math.sqrt(t1 * tau) * math.sqrt(2.0 * math.pi) / 2.0
    if not 0 < q <= 1:
        return None
    return abs(math.sqrt(tau) * math.sqrt(max(-2.0 * math.log(q), 0.0)))


def _gauss_newton(v, tau, t1, t2, eta, box, max_iter=200):
    """Damped Gauss-Newton on square-root moments.

    Residuals are ``sqrt(d1)`` and the signed ``E[s''] / 2`` relative to
    their targets, which are smooth in the thresholds (``d2`` itself is a
    square and flattens near zero targets).
    """
    rt = math.sqrt(tau)
    g1 = math.sqrt(t1) if t1 > 0 else 1.0
    root2 = math.sqrt(t2)
    g2 = root2 if t2 > 0 else 1.0
    c1 = math.sqrt(t1) / g1 if t1 > 0 else 0.0
    c2 = eta * root2 / g2

    def resid_jac(v):
        a, b = v / rt
        pa, pb = _phi(a), _phi(b)
        r = np.array([(pa + pb) / rt / g1 - c1, (a * pa + b * pb) / (2 * tau) / g2 - c2])
        J = np.array(
            [
                [-a * pa / tau / g1, -b * pb / tau / g1],
                [(1 - a * a) * pa / (2 * tau * rt) / g2, (1 - b * b) * pb / (2 * tau * rt) / g2],
            ]
        )
        return r, J

    lam = 1e-3
    r, J = resid_jac(v)
    f = float(r @ r)
    for _ in range(max_iter):
        if f < 1e-32:
            break
        JtJ = J.T @ J
        g = J.T @ r
        improved = small = False
        for _ in range(30):
            A = JtJ + lam * np.diag(np.diag(JtJ) + 1e-12)
            try:
                step = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            v_new = np.clip(v + step, -box, box)
            r_new, J_new = resid_jac(v_new)
            f_new = float(r_new @ r_new)
            if f_new < f:
                improved = True
                small = np.max(np.abs(v_new - v)) < 1e-15 * (1.0 + np.max(np.abs(v)))
                v, r, J, f = v_new, r_new, J_new, f_new
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 4.0
        if not improved or small:
            break
    return v


def solve_thresholds(
    target_d1: float,
    target_d2: float,
    tau: float,
    search_cap: float = 2.0**10,
    strict: bool = True,
) -> Thresholds:
    """Find ternary thresholds whose exact moments match ``(target_d1, target_d2)`` at ``tau``.

    The search starts in the box ``[-1, 1]^2`` with several symmetric and
    asymmetric starting points, and doubles the box until some start
    reaches a residual of at most 1e-8 or the box exceeds ``search_cap``.
    Among successful solutions in a box the one with the smallest
    ``|s_minus| + |s_plus|`` is returned.

    Parameters
    ----------
    strict : bool
        If False, return the best pair found even when it misses the
        target (its ``residual`` then exceeds 1e-8) instead of raising.

    Raises
    ------
    CalibrationError
        When ``strict`` and no solution reaches the tolerance.
    """
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError("tau must be positive")
    if target_d1 < 0 or target_d2 < 0 or not (target_d1 > 0 or target_d2 > 0):
        raise ValueError("targets must be nonnegative and not both zero")
    t1, t2 = float(target_d1), float(target_d2)
    starts = [(-0.5, 0.5), (-0.1, 0.1), (-0.6, 0.2), (-0.2, 0.6), (0.3, 0.7), (-0.7, -0.3)]
    etas = (1.0, -1.0) if t2 > 0 else (1.0,)
    best = None
    sym = _symmetric_root(t1, tau) if t2 == 0 else None
    box = 1.0
    while box <= search_cap:
        found = []
        if sym is not None and sym <= box:
            res = _objective(-sym, sym, tau, t1, t2)
            best = (res, 2 * sym, 0.0 - sym, sym)
            if res <= _SUCCESS_TOL:
                found.append(best)
        for eta in etas:
            for s0 in starts:
                v = _gauss_newton(np.array(s0) * box, tau, t1, t2, eta, box)
                sm, sp = sorted(float(x) for x in v)
                res = _objective(sm, sp, tau, t1, t2)
                cand = (res, abs(sm) + abs(sp), sm, sp)
                if best is None or cand[0] < best[0]:
                    best = cand
                if res <= _SUCCESS_TOL:
                    found.append(cand)
        if found:
            res, _, sm, sp = min(found, key=lambda c: (round(c[1], 9), c[0]))
            return Thresholds(sm, sp, float(tau), (t1, t2), res)
        box *= 2.0
    res, _, sm, sp = best
    thr = Thresholds(sm, sp, float(tau), (t1, t2), res)
    if strict:
        raise CalibrationError(
            f"no thresholds match (d1, d2) = ({t1:.6g}, {t2:.6g}) at tau={tau:.6g}; "
            f"best residual {res:.3g} at ({sm:.6g}, {sp:.6g})",
            thr,
        )
    return thr


# --------------------------------------------------------------------------
# packed matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TernaryWeightSpec:
    m: int
    p: int
    epsilon: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise RejectedInput(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.m < 1 or self.p < 1:
            raise RejectedInput("m and p must be positive")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.epsilon)


@dataclass(frozen=True, eq=False)
class PackedTernaryMatrix:
    """``scale * V`` with ``V`` in {-1, 0, +1}, stored as sign/mask bitplanes."""

    rows: int
    cols: int
    mask_plane: np.ndarray
    sign_plane: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        words = bits.n_words(self.cols)
        for plane in (self.mask_plane, self.sign_plane):
            if plane.dtype != np.uint64 or plane.shape != (self.rows, words):
                raise ValueError(f"planes must be uint64 of shape {(self.rows, words)}")
            plane.setflags(write=False)
        if np.any(self.sign_plane & ~self.mask_plane):
            raise ValueError("sign bit set outside the mask")
        if self.cols % 64:
            pad = ~np.uint64(0) << np.uint64(self.cols % 64)
            if np.any(self.mask_plane[:, -1] & pad):
                raise ValueError("bits set in row padding")

    @classmethod
    def from_dense(cls, values, scale: float = 1.0) -> "PackedTernaryMatrix":
        v = np.asarray(values)
        if v.ndim != 2 or not np.isin(v, (-1, 0, 1)).all():
            raise ValueError("values must be a 2-D array over {-1, 0, 1}")
        mask, sign = bits.pack(np.ascontiguousarray(v, dtype=np.int8))
        return cls(v.shape[0], v.shape[1], mask, sign, float(scale))

    def unpack(self) -> np.ndarray:
        """The {-1, 0, +1} pattern as ``int8`` (without ``scale``)."""
        return bits.unpack(self.mask_plane, self.sign_plane, self.cols)

    def to_dense(self) -> np.ndarray:
        return self.unpack().astype(float) * self.scale

    def transpose(self) -> "PackedTernaryMatrix":
        mask, sign = bits.transpose_planes(self.mask_plane, self.sign_plane, self.cols)
        return PackedTernaryMatrix(self.cols, self.rows, mask, sign, self.scale)

    def nnz(self) -> int:
        return int(bits.popcount_total(self.mask_plane))

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nbytes(self) -> int:
        """Serialized size: header plus both planes."""
        return _HEADER.size + self.mask_plane.nbytes + self.sign_plane.nbytes

    def __eq__(self, other):
        if not isinstance(other, PackedTernaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.scale == other.scale
            and np.array_equal(self.mask_plane, other.mask_plane)
            and np.array_equal(self.sign_plane, other.sign_plane)
        )

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_HEADER.pack(PACKED_MAGIC, self.rows, self.cols, self.scale))
        buf.write(self.mask_plane.astype("<u8").tobytes())
        buf.write(self.sign_plane.astype("<u8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PackedTernaryMatrix":
        if len(data) < _HEADER.size:
            raise ValueError("truncated packed matrix")
        magic, rows, cols, scale = _HEADER.unpack_from(data, 0)
        if magic != PACKED_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        words = bits.n_words(cols)
        count = rows * words
        expected = _HEADER.size + 16 * count
        if len(data) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(data)}")
        planes = np.frombuffer(data, dtype="<u8", offset=_HEADER.size, count=2 * count)
        planes = planes.astype(np.uint64).reshape(2, rows, words)
        return cls(rows, cols, planes[0].copy(), planes[1].copy(), float(scale))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PackedTernaryMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def sample_ternary_weights(spec: TernaryWeightSpec) -> PackedTernaryMatrix:
    """I.i.d. entries: 0 w.p. ``epsilon``, each of ``+-(1-epsilon)^(-1/2)`` w.p. ``(1-epsilon)/2``.

    Rows are drawn in blocks of 256 from Philox streams keyed by
    ``(seed, block)``.
    """
    eps = spec.epsilon
    mask_rows, sign_rows = [], []
    for b, start in enumerate(range(0, spec.m, 256)):
        stop = min(start + 256, spec.m)
        u = block_generator(spec.seed, b, 2).random((stop - start, spec.p))
        vals = np.zeros(u.shape, dtype=np.int8)
        vals[u >= eps] = 1
        vals[(u >= eps) & (u < 0.5 * (1.0 + eps))] = -1
        mk, sg = bits.pack(vals)
        mask_rows.append(mk)
        sign_rows.append(sg)
    return PackedTernaryMatrix(
        spec.m, spec.p, np.vstack(mask_rows), np.vstack(sign_rows), spec.scale
    )


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------


def _data_matrix(X) -> np.ndarray:
    X = X.X if isinstance(X, Dataset) else X
    return np.ascontiguousarray(X, dtype=float)


def ternary_transform(W: PackedTernaryMatrix, X, thr) -> PackedTernaryMatrix:
    """Ternary features ``sigma_ter(W X)`` as a packed ``(m, n)`` matrix.

    ``W X`` is accumulated with additions and subtractions of rows of ``X``
    selected by the bitplanes; each accumulated entry is then scaled once by
    ``W.scale`` and thresholded (the thresholds themselves map to 0).
    Counts are recorded on the active :class:`trf.opcount.OpCounter`.

    ``thr`` may be a :class:`Thresholds` or a :class:`trf.moments.Ternary`.
    """
    Xa = _data_matrix(X)
    if W.cols != Xa.shape[0]:
        raise ValueError(f"W has {W.cols} columns but data has dimension {Xa.shape[0]}")
    mask, sign, adds = bits.ternary_transform_kernel(
        W.mask_plane, W.sign_plane, Xa, float(W.scale), float(thr.s_minus), float(thr.s_plus)
    )
    opcount.record(multiplies=0, additions=adds, scale_multiplies=W.rows * Xa.shape[1])
    return PackedTernaryMatrix(W.rows, Xa.shape[1], mask, sign, 1.0)


def dense_transform(W, X, kind: Activation, allow_ternary: bool = False) -> np.ndarray:
    """Dense features ``sigma(W X)``; the cos/sin pair stacks ``2m`` rows (cos first)."""
    Xa = _data_matrix(X)
    W = W.to_dense() if isinstance(W, PackedTernaryMatrix) else np.asarray(W, dtype=float)
    if W.shape[1] != Xa.shape[0]:
        raise ValueError(f"W has {W.shape[1]} columns but data has dimension {Xa.shape[0]}")
    if isinstance(kind, Ternary) and not allow_ternary:
        raise ValueError("use ternary_transform for ternary activations (or pass allow_ternary=True)")
    pre = W @ Xa
    opcount.record(multiplies=pre.size * W.shape[1], additions=pre.size * W.shape[1])
    if isinstance(kind, RFFPair):
        return np.vstack([np.cos(pre), np.sin(pre)])
    return np.asarray(kind(pre), dtype=float)


def feature_bits(features: FeatureMatrix, bits_per_float: int = 32) -> int:
    """Storage for a feature matrix: 2 bits per ternary entry, ``bits_per_float`` per dense entry."""
    if isinstance(features, PackedTernaryMatrix):
        return 8 * (features.mask_plane.nbytes + features.sign_plane.nbytes)
    return int(np.asarray(features).size) * bits_per_float


def gram(features: FeatureMatrix, m: Optional[int] = None) -> np.ndarray:
    """``Sigma^T Sigma / m`` for an ``(rows, n)`` feature matrix.

    ``m`` defaults to the row count; pass the number of weight draws for
    stacked cos/sin features (``rows = 2m``). Packed features use popcounts
    over the joint mask (agreements minus disagreements); the only floating
    operation is the final scaling.
    """
    if isinstance(features, PackedTernaryMatrix):
        m = features.rows if m is None else int(m)
        if m < 1:
            raise ValueError("need at least one feature")
        T = features.transpose()
        counts = bits.gram_counts(T.mask_plane, T.sign_plane)
        opcount.record(scale_multiplies=counts.size)
        return counts * features.scale**2 / m
    F = np.asarray(features, dtype=float)
    if F.shape[0] < 1:
        raise ValueError("need at least one feature")
    G = F.T @ F / (F.shape[0] if m is None else int(m))
    return 0.5 * (G + G.T)


def cross_gram(features_a: FeatureMatrix, features_b: FeatureMatrix) -> np.ndarray:
    """``Sigma_a^T Sigma_b / m`` for two feature matrices over the same features."""
    if isinstance(features_a, PackedTernaryMatrix) != isinstance(features_b, PackedTernaryMatrix):
        raise TypeError("both feature matrices must be packed or both dense")
    if isinstance(features_a, PackedTernaryMatrix):
        if features_a.rows != features_b.rows:
            raise ValueError("feature counts differ")
        A, B = features_a.transpose(), features_b.transpose()
        counts = bits.cross_counts(A.mask_plane, A.sign_plane, B.mask_plane, B.sign_plane)
        opcount.record(scale_multiplies=counts.size)
        return counts * (features_a.scale * features_b.scale) / features_a.rows
    Fa, Fb = np.asarray(features_a, dtype=float), np.asarray(features_b, dtype=float)
    if Fa.shape[0] != Fb.shape[0]:
        raise ValueError("feature counts differ")
    return Fa.T @ Fb / Fa.shape[0]
