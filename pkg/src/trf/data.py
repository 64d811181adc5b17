"""Gaussian-mixture data, CSV ingestion and the per-dataset statistics.

Samples are columns: ``X`` has shape ``(p, n)``. For class ``a`` a sample is
``x = mu_a / sqrt(p) + z`` with ``z ~ N(0, C_a / p)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "RejectedInput",
    "ParseError",
    "GmmSpec",
    "Dataset",
    "GmmStats",
    "reference_mixture",
    "gmm_spec_from_config",
    "load_gmm_config",
    "sample_gmm",
    "estimate_tau",
    "load_csv",
    "split",
    "column_generator",
]

_SYM_TOL = 1e-12
_NEG_EIG_TOL = -1e-10


class RejectedInput(ValueError):
    """Input violates an operation's preconditions."""


class ParseError(ValueError):
    """A data file could not be parsed; ``row`` is the 1-based line number."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


def column_generator(seed: int, column: int) -> np.random.Generator:
    """Counter-based (Philox) generator for one column, keyed by ``(seed, column)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(column)])))


@dataclass(frozen=True)
class GmmSpec:
    """Parameters of a K-class Gaussian mixture.

    ``means`` has shape (K, p) and holds the unnormalized class means;
    ``covariances`` has shape (K, p, p).
    """

    means: np.ndarray
    covariances: np.ndarray
    class_sizes: tuple

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        covs = np.array(self.covariances, dtype=float)
        sizes = tuple(int(s) for s in self.class_sizes)
        if means.ndim != 2:
            raise RejectedInput("means must be a (K, p) array")
        K, p = means.shape
        if covs.shape != (K, p, p):
            raise RejectedInput(f"covariances must have shape {(K, p, p)}, got {covs.shape}")
        if len(sizes) != K or any(s <= 0 for s in sizes):
            raise RejectedInput("need one positive class size per class")
        for a in range(K):
            if np.max(np.abs(covs[a] - covs[a].T), initial=0.0) > _SYM_TOL:
                raise RejectedInput(f"covariance of class {a} is not symmetric")
        means.setflags(write=False)
        covs.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "class_sizes", sizes)

    @property
    def p(self) -> int:
        return self.means.shape[1]

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def n(self) -> int:
        return sum(self.class_sizes)

    @property
    def proportions(self) -> np.ndarray:
        return np.asarray(self.class_sizes, dtype=float) / self.n

    def mean_covariance(self) -> np.ndarray:
        """``C° = sum_a (n_a / n) C_a``."""
        return np.tensordot(self.proportions, self.covariances, axes=1)

    def tau(self) -> float:
        """``tr(C°) / p``."""
        traces = np.trace(self.covariances, axis1=1, axis2=2)
        return float(self.proportions @ traces) / self.p

    def t_vector(self) -> np.ndarray:
        """``tr(C_a - C°) / sqrt(p)`` per class."""
        traces = np.trace(self.covariances, axis1=1, axis2=2)
        return (traces - self.proportions @ traces) / math.sqrt(self.p)

    def T_matrix(self) -> np.ndarray:
        """``tr(C_a C_b) / p``."""
        C = self.covariances
        # tr(A B) = sum(A * B.T); covariances are symmetric
        T = np.einsum("aij,bij->ab", C, C) / self.p
        return 0.5 * (T + T.T)

    def with_sizes(self, class_sizes) -> "GmmSpec":
        return GmmSpec(self.means, self.covariances, tuple(class_sizes))


def reference_mixture(p: int, n: int, K: int = 2) -> GmmSpec:
    """Mixture with ``mu_a = 4 e_a`` and ``C_a = (1 + 4 (a - 1) / sqrt(p)) I_p``, equal classes."""
    if n % K:
        raise RejectedInput("n must be divisible by K for equal classes")
    means = np.zeros((K, p))
    covs = np.empty((K, p, p))
    for a in range(K):
        means[a, a] = 4.0
        covs[a] = (1.0 + 4.0 * a / math.sqrt(p)) * np.eye(p)
    return GmmSpec(means, covs, (n // K,) * K)


@dataclass(frozen=True)
class Dataset:
    """Column samples with integer labels."""

    X: np.ndarray
    labels: np.ndarray
    origin: str = "file"
    classes: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise RejectedInput("X must be a (p, n) matrix")
        if labels.shape != (X.shape[1],):
            raise RejectedInput(f"{X.shape[1]} columns but {labels.size} labels")
        K = len(self.classes) if self.classes else (int(labels.max()) + 1 if labels.size else 0)
        if labels.size and (labels.min() < 0 or labels.max() >= K):
            raise RejectedInput("labels must index classes 0..K-1")
        X.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        if not self.classes:
            object.__setattr__(self, "classes", tuple(range(K)))

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return len(self.classes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[:, idx], self.labels[idx], self.origin, self.classes)

    def targets(self) -> np.ndarray:
        """+1 for class 0 and -1 for class 1 (two-class data only)."""
        if self.K != 2:
            raise RejectedInput("+-1 targets need exactly two classes")
        return np.where(self.labels == 0, 1.0, -1.0)


@dataclass(frozen=True)
class GmmStats:
    """Data statistics entering the asymptotic equivalent.

    ``Z`` and ``phi`` are only known for synthetic data; they are ``None``
    for file data.
    """

    M: np.ndarray
    t: np.ndarray
    T: np.ndarray
    tau: float
    J: np.ndarray
    Z: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def class_sizes(self) -> np.ndarray:
        return self.J.sum(axis=0)

    @classmethod
    def from_spec(cls, spec: GmmSpec, labels) -> "GmmStats":
        """Statistics without the random parts (``Z``, ``phi``)."""
        labels = np.asarray(labels)
        J = np.zeros((labels.size, spec.K))
        J[np.arange(labels.size), labels] = 1.0
        return cls(M=spec.means.T.copy(), t=spec.t_vector(), T=spec.T_matrix(), tau=spec.tau(), J=J)

    def permuted(self, perm) -> "GmmStats":
        perm = np.asarray(perm)
        return GmmStats(
            self.M, self.t, self.T, self.tau, self.J[perm],
            None if self.Z is None else self.Z[:, perm],
            None if self.phi is None else self.phi[perm],
        )


def _cov_roots(covs: np.ndarray) -> list:
    """Symmetric PSD square roots; isotropic/diagonal covariances take a shortcut."""
    roots = []
    for a, C in enumerate(covs):
        diag = np.diag(C)
        if not np.any(C - np.diag(diag)):
            if diag.min() < _NEG_EIG_TOL:
                raise RejectedInput(f"covariance of class {a} has a negative eigenvalue {diag.min():.3g}")
            roots.append(np.sqrt(np.clip(diag, 0.0, None)))
            continue
        evals, evecs = np.linalg.eigh(C)
        if not np.all(np.isfinite(evals)):
            raise RejectedInput(f"covariance of class {a} could not be factorized")
        if evals.min() < _NEG_EIG_TOL:
            raise RejectedInput(f"covariance of class {a} has a negative eigenvalue {evals.min():.3g}")
        roots.append((evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T)
    return roots


def sample_gmm(spec: GmmSpec, seed: int) -> tuple[Dataset, GmmStats]:
    """Draw ``spec.n`` samples, class blocks in label order.

    Column ``i`` uses its own Philox stream keyed by ``(seed, i)``, so any
    column can be regenerated independently of the others.
    """
    p, n = spec.p, spec.n
    roots = _cov_roots(spec.covariances)
    labels = np.repeat(np.arange(spec.K), spec.class_sizes)
    G = np.empty((p, n))
    for i in range(n):
        G[:, i] = column_generator(seed, i).standard_normal(p)
    Z = np.empty((p, n))
    traces = np.trace(spec.covariances, axis1=1, axis2=2)
    expected_sq = np.empty(n)
    sqrt_p = math.sqrt(p)
    for a, R in enumerate(roots):
        idx = labels == a
        Z[:, idx] = (R[:, None] * G[:, idx] if R.ndim == 1 else R @ G[:, idx]) / sqrt_p
        expected_sq[idx] = traces[a] / p
    M = spec.means.T.copy()
    X = M[:, labels] / sqrt_p + Z
    phi = np.einsum("ij,ij->j", Z, Z) - expected_sq
    stats = GmmStats.from_spec(spec, labels)
    Z.setflags(write=False)
    stats = GmmStats(stats.M, stats.t, stats.T, stats.tau, stats.J, Z, phi)
    return Dataset(X, labels, "synthetic-GMM", tuple(range(spec.K))), stats


def estimate_tau(data) -> float:
    """Mean squared column norm, ``(1/n) sum_i ||x_i||^2``."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise RejectedInput("cannot estimate tau from an empty dataset")
    return float(np.einsum("ij,ij->", X, X) / X.shape[1])


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def _parse_covariance(entry, p: int, where: str) -> np.ndarray:
    if isinstance(entry, dict):
        if "isotropic" in entry:
            return float(entry["isotropic"]) * np.eye(p)
        if "diagonal" in entry:
            d = np.asarray(entry["diagonal"], dtype=float)
            if d.shape != (p,):
                raise RejectedInput(f"{where}.diagonal must have length {p}")
            return np.diag(d)
        if "dense" in entry:
            entry = entry["dense"]
        else:
            raise RejectedInput(f"{where}: expected one of isotropic/diagonal/dense")
    C = np.asarray(entry, dtype=float)
    if C.shape != (p, p):
        raise RejectedInput(f"{where} must be {p}x{p}")
    return C


def gmm_spec_from_config(cfg: dict) -> GmmSpec:
    """Build a :class:`GmmSpec` from a JSON-style mapping.

    Either ``{"preset": "reference", "p": ..., "n": ...}`` or explicit
    ``means`` (K lists of length p), ``covariances`` (per class
    ``{"isotropic": s}``, ``{"diagonal": [...]}`` or a dense matrix) and
    ``class_sizes``.
    """
    if cfg.get("preset") == "reference":
        return reference_mixture(int(cfg["p"]), int(cfg["n"]), int(cfg.get("K", 2)))
    try:
        means = np.asarray(cfg["means"], dtype=float)
        sizes = cfg["class_sizes"]
        cov_entries = cfg["covariances"]
    except KeyError as exc:
        raise RejectedInput(f"gmm config missing field {exc.args[0]!r}") from None
    if means.ndim != 2:
        raise RejectedInput("means must be a list of equal-length lists")
    p = means.shape[1]
    if len(cov_entries) != means.shape[0]:
        raise RejectedInput("need one covariance per class")
    covs = np.stack([_parse_covariance(c, p, f"covariances[{a}]") for a, c in enumerate(cov_entries)])
    return GmmSpec(means, covs, tuple(sizes))


def load_gmm_config(path) -> GmmSpec:
    with open(path) as fh:
        return gmm_spec_from_config(json.load(fh))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, standardize: bool = False) -> Dataset:
    """Read a CSV with one sample per row.

    Parameters
    ----------
    path : path-like
    label_column : int or str
        Column index (negative counts from the end) or header name.
    standardize : bool
        Divide every feature by one global constant so the mean squared
        sample norm is 1.

    Raises
    ------
    ParseError
        On ragged rows, non-numeric feature cells or an unknown label column.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("file is empty")
    header = None
    first = rows[0][1]
    if isinstance(label_column, str):
        header = [c.strip() for c in first]
        if label_column not in header:
            raise ParseError(f"no column named {label_column!r} in header {header}", rows[0][0])
        label_idx = header.index(label_column)
        rows = rows[1:]
    else:
        label_idx = int(label_column)
        width0 = len(first)
        li = label_idx % width0 if -width0 <= label_idx < width0 else None
        if li is None:
            raise ParseError(f"label column {label_column} out of range for {width0} columns", rows[0][0])
        if not all(_is_number(c) for j, c in enumerate(first) if j != li):
            rows = rows[1:]
    if not rows:
        raise ParseError("no data rows")
    width = len(rows[0][1])
    label_idx = label_idx % width
    feats, raw_labels = [], []
    for lineno, r in rows:
        if len(r) != width:
            raise ParseError(f"expected {width} fields, found {len(r)}", lineno)
        vals = []
        for j, c in enumerate(r):
            if j == label_idx:
                continue
            try:
                v = float(c)
            except ValueError:
                raise ParseError(f"non-numeric cell {c!r} in column {j}", lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {c!r} in column {j}", lineno)
            vals.append(v)
        feats.append(vals)
        raw_labels.append(r[label_idx].strip())
    classes = tuple(dict.fromkeys(raw_labels))
    lookup = {c: k for k, c in enumerate(classes)}
    X = np.asarray(feats, dtype=float).T
    labels = np.array([lookup[c] for c in raw_labels])
    if standardize:
        tau = estimate_tau(X)
        if tau <= 0:
            raise RejectedInput("cannot standardize an all-zero dataset")
        X = X / math.sqrt(tau)
    return Dataset(X, labels, "file", classes)


def split(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; each class contributes at least one sample to each side."""
    if not 0.0 < train_fraction < 1.0:
        raise RejectedInput(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5B117])))
    train, test = [], []
    for k in range(data.K):
        idx = np.flatnonzero(data.labels == k)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise RejectedInput(f"class {data.classes[k]!r} has fewer than 2 samples")
        idx = rng.permutation(idx)
        cut = int(round(train_fraction * idx.size))
        cut = min(max(cut, 1), idx.size - 1)
        train.append(idx[:cut])
        test.append(idx[cut:])
    tr = np.sort(np.concatenate(train))
    te = np.sort(np.concatenate(test))
    return data.subset(tr), data.subset(te)
