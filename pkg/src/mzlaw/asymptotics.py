"""Exponent-vector tests for integrals and series of log-corrected power functions.

A vector ``(e0, e1, e2, ...)`` stands for ``x^e0 (log x)^e1 (loglog x)^e2 ...``.
``int^inf`` (or ``sum``) of it is finite iff the first entry differing from -1
is below -1; if every entry equals -1 the integral diverges.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

EXP_TOL = 1e-9


def pad(e: Sequence[float], n: int = 5) -> tuple[float, ...]:
    e = tuple(float(v) for v in e)
    return e + (0.0,) * (n - len(e)) if len(e) < n else e


def integral_converges(e: Sequence[float]) -> bool:
    for v in pad(e):
        if abs(v + 1.0) > EXP_TOL:
            return v < -1.0
    return False


def deciding_level(e: Sequence[float]) -> int | None:
    """Index of the first exponent that differs from -1 (None if all equal -1)."""
    for i, v in enumerate(pad(e)):
        if abs(v + 1.0) > EXP_TOL:
            return i
    return None


def compose_tail(tail: Sequence[float], seq: Sequence[float]) -> tuple[float, ...]:
    """Exponents of ``n -> P(|X| > b_n)`` from tail exponents of |X| and those of b_n.

    ``b_n^{t0}`` contributes ``t0 * seq``; ``log b_n ~ seq[0] log n`` and deeper
    logs of b_n are asymptotic to those of n, so ``t1, t2, ...`` carry over.
    """
    t, s = pad(tail), pad(seq)
    return tuple(t[0] * s[i] + (t[i] if i > 0 else 0.0) for i in range(len(t)))


def loglog_slope(log_x: np.ndarray, log_y: np.ndarray) -> float:
    """Least-squares slope of ``log_y`` against ``log_x``."""
    return float(np.polyfit(np.asarray(log_x, float), np.asarray(log_y, float), 1)[0])
