"""Random projection laws with zero mean and unit variance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["WeightLaw", "GAUSSIAN", "weight_law_from_name", "sample_dense", "block_generator"]

_BLOCK = 256


def block_generator(seed: int, block: int, salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block), int(salt)])))


@dataclass(frozen=True)
class WeightLaw:
    """Entry law of ``W``: ``gaussian``, ``student_t`` (rescaled to unit variance) or ``ternary``."""

    name: str = "gaussian"
    dof: float = 7.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.name not in ("gaussian", "student_t", "ternary"):
            raise ValueError(f"unknown weight law {self.name!r}")
        if self.name == "student_t" and not self.dof > 4:
            raise ValueError("student_t needs dof > 4 for a finite fourth moment")
        if self.name == "ternary" and not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    def describe(self) -> str:
        if self.name == "student_t":
            return f"student_t({self.dof:g})"
        if self.name == "ternary":
            return f"ternary(eps={self.epsilon:g})"
        return "gaussian"

    def fourth_moment(self) -> float:
        if self.name == "gaussian":
            return 3.0
        if self.name == "student_t":
            nu = self.dof
            return 3.0 * (nu - 2) / (nu - 4)
        return 1.0 / (1.0 - self.epsilon)


GAUSSIAN = WeightLaw("gaussian")


def weight_law_from_name(name: str, **params) -> WeightLaw:
    key = name.strip().lower().replace("-", "_")
    if key in ("t", "student", "studentt"):
        key = "student_t"
    return WeightLaw(key, **params)


def _draw(law: WeightLaw, rng: np.random.Generator, shape) -> np.ndarray:
    if law.name == "gaussian":
        return rng.standard_normal(shape)
    if law.name == "student_t":
        nu = law.dof
        return rng.standard_t(nu, shape) / math.sqrt(nu / (nu - 2))
    u = rng.random(shape)
    eps = law.epsilon
    mag = 1.0 / math.sqrt(1.0 - eps)
    out = np.where(u < eps, 0.0, mag)
    out[(u >= eps) & (u < 0.5 * (1.0 + eps))] *= -1.0
    return out


def sample_dense(law: WeightLaw, m: int, p: int, seed: int) -> np.ndarray:
    """``(m, p)`` matrix of i.i.d. entries; rows are drawn in blocks of 256 keyed by ``(seed, block)``."""
    W = np.empty((m, p))
    for b, start in enumerate(range(0, m, _BLOCK)):
        stop = min(start + _BLOCK, m)
        W[start:stop] = _draw(law, block_generator(seed, b, 1), (stop - start, p))
    return W
