"""Random-features ridge regression on +-1 targets.

Features enter as ``Sigma = F / sqrt(m)`` where ``F`` is the ``(rows, n)``
feature matrix and ``m`` the number of weight draws (``rows = 2m`` for
the cos/sin pair). With ``y`` centered by the intercept ``mean(y)`` the
weights solve

    (Sigma Sigma^T / n + gamma I) w = Sigma y / n

directly when ``rows <= n``, and through the dual
``(Sigma^T Sigma / n + gamma I) alpha = y / n``, ``w = Sigma alpha``
otherwise.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import opcount
from .data import Dataset
from .moments import Activation, RFFPair, Ternary, moments_of
from .ternary import (
    PackedTernaryMatrix,
    TernaryWeightSpec,
    dense_transform,
    feature_bits,
    sample_ternary_weights,
    solve_thresholds,
    ternary_transform,
)
from .weights import GAUSSIAN, WeightLaw, sample_dense

__all__ = [
    "RidgeModel",
    "FeatureMap",
    "fit_ridge",
    "predict",
    "predict_mse",
    "ridge_path",
    "SweepConfig",
    "SweepRow",
    "sweep",
    "rows_to_csv",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = ("kind", "m", "epsilon", "gamma", "seed", "mse", "fit_seconds",
                  "feature_bits", "multiplies", "additions")


@dataclass(frozen=True)
class FeatureMap:
    """Reproducible description of ``sigma(W x)``: activation, weight law, draw count and seed."""

    activation: Activation
    law: WeightLaw
    m: int
    seed: int

    def describe(self) -> str:
        return f"{type(self.activation).__name__}/{self.law.describe()}/m={self.m}/seed={self.seed}"


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray
    gamma: float
    intercept: float
    m: int
    feature_map: Optional[FeatureMap] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights are not finite")


def _dense_features(features) -> np.ndarray:
    if isinstance(features, PackedTernaryMatrix):
        return features.to_dense()
    F = np.asarray(features, dtype=float)
    if F.ndim != 2:
        raise ValueError("features must be a (rows, n) matrix")
    return F


def _cholesky_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(M, lower=True), rhs)
    except LinAlgError:
        jitter = 1e-12 * np.trace(M)
        return cho_solve(cho_factor(M + jitter * np.eye(M.shape[0]), lower=True), rhs)


def _check_targets(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != n:
        raise ValueError(f"{n} samples but {y.size} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    return y


def fit_ridge(features, targets, gamma: float, m: Optional[int] = None,
              method: str = "auto", feature_map: Optional[FeatureMap] = None) -> RidgeModel:
    """Ridge fit on a feature matrix with ``n``-normalized loss.

    ``m`` defaults to the number of feature rows; pass the draw count for
    stacked cos/sin features. ``method`` forces ``"primal"`` or ``"dual"``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    F = _dense_features(features)
    rows, n = F.shape
    if rows < 1 or n < 1:
        raise ValueError("need at least one feature and one sample")
    m = rows if m is None else int(m)
    y = _check_targets(targets, n)
    intercept = float(y.mean())
    yc = y - intercept
    S = F / math.sqrt(m)
    if method == "auto":
        method = "primal" if rows <= n else "dual"
    if method == "primal":
        w = _cholesky_solve(S @ S.T / n + gamma * np.eye(rows), S @ yc / n)
    elif method == "dual":
        alpha = _cholesky_solve(S.T @ S / n + gamma * np.eye(n), yc / n)
        w = S @ alpha
    else:
        raise ValueError(f"unknown method {method!r}")
    return RidgeModel(w, float(gamma), intercept, m, feature_map)


def predict(model: RidgeModel, features) -> np.ndarray:
    F = _dense_features(features)
    if F.shape[0] != model.weights.size:
        raise ValueError(f"model has {model.weights.size} weights but features have {F.shape[0]} rows")
    return model.weights @ F / math.sqrt(model.m) + model.intercept


def _normalized_mse(pred, y) -> float:
    var = float(np.var(y))
    if var == 0:
        raise ValueError("test targets have zero variance")
    return float(np.mean((pred - y) ** 2) / var)


def predict_mse(model: RidgeModel, features_test, targets_test) -> float:
    """Test MSE divided by the variance of the test targets."""
    pred = predict(model, features_test)
    y = _check_targets(targets_test, pred.size)
    return _normalized_mse(pred, y)


def ridge_path(features_train, y_train, features_test, y_test, gammas, m: Optional[int] = None) -> np.ndarray:
    """Normalized test MSE for each ``gamma``, reusing one kernel matrix.

    Always solves in the dual (``n_train x n_train``) or primal
    (``rows x rows``) space, whichever is smaller.
    """
    Ftr = _dense_features(features_train)
    Fte = _dense_features(features_test)
    rows, n = Ftr.shape
    m = rows if m is None else int(m)
    y = _check_targets(y_train, n)
    yt = _check_targets(y_test, Fte.shape[1])
    b = float(y.mean())
    yc = y - b
    out = np.empty(len(gammas))
    if rows <= n:
        S = Ftr / math.sqrt(m)
        C = S @ S.T / n
        r = S @ yc / n
        St = Fte / math.sqrt(m)
        for i, g in enumerate(gammas):
            w = _cholesky_solve(C + g * np.eye(rows), r)
            out[i] = _normalized_mse(w @ St + b, yt)
    else:
        G = Ftr.T @ Ftr / m
        Gx = Fte.T @ Ftr / m
        for i, g in enumerate(gammas):
            alpha = _cholesky_solve(G / n + g * np.eye(n), yc / n)
            out[i] = _normalized_mse(Gx @ alpha + b, yt)
    return out


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepConfig:
    """Grid of the regression experiment.

    ``kinds`` names feature maps: ``"rff"`` for Gaussian cos/sin features,
    ``"trf"`` for ternary weights and activations calibrated to ``target``,
    or any activation name (Gaussian weights).
    """

    train: Dataset
    test: Dataset
    kinds: tuple = ("rff", "trf")
    m_grid: tuple = (512,)
    epsilons: tuple = (0.9,)
    gammas: tuple = tuple(10.0 ** np.arange(-7, 2.5, 0.5))
    seeds: tuple = (0,)
    target: str = "rff"
    tau: Optional[float] = None


@dataclass(frozen=True)
class SweepRow:
    kind: str
    m: int
    epsilon: float
    gamma: float
    seed: int
    mse: float
    fit_seconds: float
    feature_bits: int
    multiplies: int
    additions: int

    def as_tuple(self):
        return tuple(getattr(self, c) for c in RESULT_COLUMNS)


def _trf_thresholds(target: str, tau: float):
    from .moments import activation_from_name

    d = moments_of(activation_from_name(target), tau)
    return solve_thresholds(d.d1, d.d2, tau, strict=False)


def _features(kind: str, m: int, eps: float, seed: int, X, thr):
    from .moments import activation_from_name

    if kind == "trf":
        W = sample_ternary_weights(TernaryWeightSpec(m, X.shape[0], eps, seed))
        return ternary_transform(W, X, thr), m
    act = RFFPair() if kind == "rff" else activation_from_name(kind)
    if isinstance(act, Ternary):
        raise ValueError("use kind 'trf' for ternary features")
    W = sample_dense(GAUSSIAN, m, X.shape[0], seed)
    return dense_transform(W, X, act), m


def sweep(cfg: SweepConfig) -> list[SweepRow]:
    """Every ``(kind, m, epsilon, gamma, seed)`` point of the grid.

    ``fit_seconds`` is wall clock for feature computation (train and test)
    plus all ridge solves of that ``(kind, m, epsilon, seed)``, divided
    evenly over the gamma grid. ``epsilon`` is reported as 0 for dense kinds.
    """
    if not cfg.seeds:
        raise ValueError("seed list is empty")
    tau = cfg.tau
    if tau is None:
        from .data import estimate_tau

        tau = estimate_tau(cfg.train)
    thr = _trf_thresholds(cfg.target, tau) if "trf" in cfg.kinds else None
    ytr, yte = cfg.train.targets(), cfg.test.targets()
    rows = []
    for kind in cfg.kinds:
        eps_list = cfg.epsilons if kind == "trf" else (0.0,)
        for m in cfg.m_grid:
            for eps in eps_list:
                for seed in cfg.seeds:
                    t0 = time.perf_counter()
                    with opcount.counting() as ops:
                        # train and test share the same weights through the seed
                        Ftr, mm = _features(kind, m, eps, seed, cfg.train.X, thr)
                        Fte, _ = _features(kind, m, eps, seed, cfg.test.X, thr)
                    mses = ridge_path(Ftr, ytr, Fte, yte, cfg.gammas, mm)
                    elapsed = (time.perf_counter() - t0) / len(cfg.gammas)
                    bits = feature_bits(Ftr) + feature_bits(Fte)
                    for g, mse in zip(cfg.gammas, mses):
                        rows.append(SweepRow(kind, int(m), float(eps), float(g), int(seed), float(mse),
                                             elapsed, int(bits), ops.multiplies, ops.additions))
    return rows


def rows_to_csv(rows, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in r.as_tuple()])
    return buf.getvalue()
