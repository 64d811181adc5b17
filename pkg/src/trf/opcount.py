"""Scoped arithmetic-operation counters for the instrumented kernels."""

from __future__ import annotations

import contextvars
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

__all__ = ["OpCounter", "counting", "record"]

_current: contextvars.ContextVar = contextvars.ContextVar("trf_opcounter", default=None)


@dataclass
class OpCounter:
    """Floating-point operation tallies for one instrumented region.

    ``multiplies`` and ``additions`` count operations inside accumulation
    loops; ``scale_multiplies`` counts the single post-accumulation scaling
    per output entry, kept apart so the accumulation count stays clean.
    """

    multiplies: int = 0
    additions: int = 0
    scale_multiplies: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, multiplies: int = 0, additions: int = 0, scale_multiplies: int = 0) -> None:
        if multiplies < 0 or additions < 0 or scale_multiplies < 0:
            raise ValueError("operation counts only grow")
        with self._lock:
            self.multiplies += int(multiplies)
            self.additions += int(additions)
            self.scale_multiplies += int(scale_multiplies)

    def as_dict(self) -> dict:
        return {
            "multiplies": self.multiplies,
            "additions": self.additions,
            "scale_multiplies": self.scale_multiplies,
        }


@contextmanager
def counting(counter: OpCounter | None = None):
    """Activate ``counter`` (or a fresh one) for kernels called in this block.

    Kernels switch to their instrumented variants only while a counter is
    active, so timing runs outside this block carry no counting overhead.
    """
    counter = OpCounter() if counter is None else counter
    token = _current.set(counter)
    try:
        yield counter
    finally:
        _current.reset(token)


def active() -> OpCounter | None:
    return _current.get()


def record(multiplies: int = 0, additions: int = 0, scale_multiplies: int = 0) -> None:
    counter = _current.get()
    if counter is not None:
        counter.add(multiplies, additions, scale_multiplies)
