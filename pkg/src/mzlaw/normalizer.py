"""Normalizing sequences ``b_n = n^{1/alpha} Lt(n^{1/alpha})`` and Karamata tail sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Integral

import numpy as np
from scipy import integrate

from .conjugate import NumericConjugate, conjugate_symbolic
from .errors import DomainError
from .svf import SlowVaryFn

_CHUNK = 1 << 20


def _as_index(n) -> np.ndarray:
    arr = np.asarray(n)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    if arr.dtype.kind == "f" and np.all(arr == np.floor(arr)) and isinstance(n, np.ndarray):
        return arr.astype(np.int64)
    raise TypeError("normalizing sequences are integer-indexed")


@dataclass(frozen=True)
class NormalizingSeq:
    alpha: float
    Ltilde: object
    start_index: int | None = None

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        lo = math.ceil(self.Ltilde.domain_low ** self.alpha - 1e-9)
        if self.start_index is None:
            object.__setattr__(self, "start_index", int(max(lo, 1)))
        elif self.start_index < lo:
            raise ValueError(f"start_index must be >= ceil(A^alpha) = {lo}")

    def b(self, n):
        """b_n for an integer or integer array ``n >= start_index``."""
        scalar = isinstance(n, Integral)
        if not scalar and not isinstance(n, np.ndarray):
            raise TypeError("normalizing sequences are integer-indexed")
        idx = _as_index(n)
        if np.any(idx < self.start_index):
            raise IndexError(f"n below start_index={self.start_index}")
        if scalar:
            y = float(idx) ** (1.0 / self.alpha)
            return y * math.exp(self.Ltilde.log_eval(y))
        y = idx.astype(float) ** (1.0 / self.alpha)
        return y * np.exp(self.Ltilde.log_eval(y))

    __call__ = b

    def log_b(self, log_n):
        """ln b_n given ln n (works far beyond float range of n)."""
        v = np.asarray(log_n, dtype=float) / self.alpha
        out = v + self.Ltilde.log_eval_log(v)
        return out

    def exponents(self):
        """Asymptotic exponents of n -> b_n on ``(n, log n, loglog n, ...)``."""
        e = self.Ltilde.exponents()
        if e is None or e[0] != 0.0:
            return None
        return (1.0 / self.alpha,) + tuple(e[1:])

    def dyadic_ratio_max(self, kmax: int = 40) -> float:
        """max over k of b_{2^{k+1}} / b_{2^k} for dyadic indices past start_index."""
        k0 = max(0, math.ceil(math.log2(self.start_index)))
        n = 2 ** np.arange(k0, kmax + 2, dtype=np.int64)
        bn = self.b(n)
        return float(np.max(bn[1:] / bn[:-1]))


def sequence_from_L(alpha: float, L, numeric_tol: float = 1e-12) -> NormalizingSeq:
    """b_n built from the conjugate of L (symbolic when available)."""
    lt = conjugate_symbolic(L)
    if lt is None:
        lt = NumericConjugate(L, numeric_tol)
    return NormalizingSeq(alpha, lt)


def log_power_normalizer(alpha: float, gamma: float) -> NormalizingSeq:
    """b_n for ``L = log^{-1/gamma}``: conjugate ``log^{1/gamma}``."""
    return sequence_from_L(alpha, SlowVaryFn.log(-1.0 / gamma))


def log_power_closed_form(alpha: float, gamma: float, n):
    """``(1/alpha)^{1/gamma} n^{1/alpha} log2(n)^{1/gamma}``."""
    n = np.asarray(n, dtype=float)
    return (1.0 / alpha) ** (1.0 / gamma) * n ** (1.0 / alpha) * np.log2(n) ** (1.0 / gamma)


@dataclass(frozen=True)
class KaramataResult:
    p: float
    q: float
    n: int
    numeric_sum: float
    asymptotic: float
    ratio: float
    remainder: float


def _terms(p, q, L, k):
    lt = -p * np.log(k)
    if q != 0.0:
        lt = lt + q * L.log_eval(k)
    return np.exp(lt)


def karamata_tail_sum(p: float, q: float, L, n: int, horizon: int | None = None) -> KaramataResult:
    """Compare ``sum_{k>=n} L^q(k)/k^p`` with ``L^q(n) / ((p-1) n^{p-1})``.

    The sum is exact up to ``horizon`` (default ``10**4 * n``) and the rest is an
    integral-test estimate from ``horizon + 1/2``.  Chunk sums are combined with
    ``math.fsum`` so the result does not depend on chunking.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not isinstance(n, Integral):
        raise TypeError("n must be an integer")
    if q != 0.0 and n < L.domain_low:
        raise DomainError(f"n={n} below domain_low={L.domain_low}")
    horizon = 10_000 * n if horizon is None else int(horizon)
    if horizon < n:
        raise ValueError("horizon must be >= n")
    parts = []
    for lo in range(n, horizon + 1, _CHUNK):
        k = np.arange(lo, min(lo + _CHUNK, horizon + 1), dtype=float)
        parts.append(float(np.sum(_terms(p, q, L, k))))

    def integrand(u):
        out = (1.0 - p) * u
        if q != 0.0:
            out += q * L.log_eval_log(u)
        return math.exp(out)

    u0 = math.log(horizon + 0.5)
    rem, _ = integrate.quad(integrand, u0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    total = math.fsum(parts + [rem])
    lq = 0.0 if q == 0.0 else q * L.log_eval(float(n))
    asym = math.exp(lq) / ((p - 1.0) * n ** (p - 1.0))
    return KaramataResult(p, q, n, total, asym, total / asym, rem)
