"""de Bruijn conjugates: symbolic where the log-class rule applies, numeric otherwise.

The numeric route inverts ``f(x) = x L(x)`` on its monotone tail; the conjugate
is then ``Lt(t) = f^{-1}(t) / t``.
"""

from __future__ import annotations

import io
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BracketError, DomainError, NonConvergenceError
from .svf import SlowVaryFn, geometric_grid, monotone_threshold

MAX_BISECTIONS = 200
MAX_DOUBLINGS = 4096


def _log_f(alpha, beta, L, x):
    # ln f(x) with f(x) = x^{ab} L^a(x^b)
    return alpha * (beta * math.log(x) + L.log_eval(x ** beta))


def asymptotic_inverse(alpha: float, beta: float, L, t: float, tol: float = 1e-12,
                       max_iter: int = MAX_BISECTIONS) -> float:
    """Solve ``x^{alpha beta} L^alpha(x^beta) = t`` for x by doubling then bisection.

    The bracket starts at the point where ``y L(y)`` becomes increasing
    (``y = x**beta``), so the root found lies on the monotone tail.  Returns
    ``s`` with ``|f(s) - t| <= tol * t``.
    """
    if not (alpha > 0 and beta > 0 and tol > 0):
        raise ValueError("alpha, beta and tol must be positive")
    if not t > 0:
        raise ValueError("t must be positive")
    x0 = monotone_threshold(L, 1.0, "increasing") ** (1.0 / beta)
    x0 = max(x0, L.domain_low ** (1.0 / beta))
    log_t = math.log(t)
    log_tol = math.log1p(tol)

    def gap(x):
        return _log_f(alpha, beta, L, x) - log_t

    g_lo = gap(x0)
    if abs(g_lo) <= log_tol:
        return x0
    if g_lo > 0:
        raise BracketError(f"t={t} is below f at the monotone threshold x={x0}")
    lo, hi = x0, 2.0 * x0
    for _ in range(MAX_DOUBLINGS):
        if not math.isfinite(hi):
            raise BracketError(f"root for t={t} lies beyond the float range")
        g_hi = gap(hi)
        if g_hi >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(f"no upper bracket for t={t}")
    if abs(g_hi) <= log_tol:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        g = gap(mid)
        if abs(g) <= log_tol:
            return mid
        if g < 0:
            lo = mid
        else:
            hi = mid
    raise NonConvergenceError(f"bisection did not reach tol={tol} in {max_iter} steps")


class NumericConjugate:
    """Memoized evaluator ``x -> asymptotic_inverse(1, 1, L, x) / x``."""

    def __init__(self, L, tol: float = 1e-12):
        self.L = L
        self.tol = float(tol)
        b = monotone_threshold(L, 1.0, "increasing")
        # smallest argument the inversion accepts: f at the threshold
        self.domain_low = max(1.0, b * math.exp(L.log_eval(b)))
        self._cache: dict[float, float] = {}
        self._lock = threading.Lock()

    def _one(self, x: float) -> float:
        with self._lock:
            hit = self._cache.get(x)
        if hit is not None:
            return hit
        if x < self.domain_low:
            raise DomainError(f"x={x} below domain_low={self.domain_low}")
        v = asymptotic_inverse(1.0, 1.0, self.L, x, self.tol) / x
        with self._lock:
            self._cache[x] = v
        return v

    def __call__(self, x):
        if isinstance(x, np.ndarray):
            return np.array([self._one(float(t)) for t in x.ravel()]).reshape(x.shape)
        return self._one(float(x))

    def log_eval(self, x):
        return np.log(self(x)) if isinstance(x, np.ndarray) else math.log(self(x))

    def log_eval_log(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u > 709.0):
            raise DomainError("numeric conjugate limited to arguments below ~1e308")
        out = np.log(self(np.exp(u)))
        return out if out.ndim else float(out)

    def exponents(self):
        """Asymptotic exponent vector, negated from ``L`` (tree family is self-conjugate up to 1/L)."""
        e = self.L.exponents() if hasattr(self.L, "exponents") else None
        if e is None or e[0] != 0.0:
            return None
        return tuple(-v for v in e)

    def __repr__(self) -> str:
        return f"NumericConjugate({self.L}, tol={self.tol:g})"


def conjugate_numeric(L, x: float, tol: float = 1e-12) -> float:
    return asymptotic_inverse(1.0, 1.0, L, x, tol) / x


def conjugate_symbolic(L) -> SlowVaryFn | None:
    """``1/L`` when L is a product of real powers of iterated logs (with a constant).

    Such functions satisfy ``(L(2x)/L(x) - 1) log L(x) -> 0``, which makes the
    reciprocal a valid conjugate.  Returns None for anything else.
    """
    if not isinstance(L, SlowVaryFn) or not L.is_slowly_varying:
        return None
    return L.reciprocal()


def bojanic_seneta_deviation(L, lambda0: float, grid: Sequence[float]) -> float:
    """max over grid of ``|(L(lambda0 x)/L(x) - 1) * log2 L(x)|``."""
    if not lambda0 > 1:
        raise ValueError("lambda0 must exceed 1")
    x = np.asarray(grid, dtype=float)
    lx = L.log_eval(x)
    r = np.exp(L.log_eval(lambda0 * x) - lx)
    return float(np.max(np.abs((r - 1.0) * lx / math.log(2.0))))


@dataclass
class ConjugacyReport:
    x: np.ndarray
    dev1: np.ndarray  # |L(x) Lt(x L(x)) - 1|
    dev2: np.ndarray  # |Lt(x) L(x Lt(x)) - 1|
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.dev1[-1] <= self.tol and self.dev2[-1] <= self.tol)

    @property
    def max_deviation(self) -> np.ndarray:
        return np.maximum(self.dev1, self.dev2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,dev1,dev2\n")
        for x, a, b in zip(self.x, self.dev1, self.dev2):
            buf.write(f"{x!r},{a!r},{b!r}\n")
        return buf.getvalue()


def _value(F, x):
    return np.exp(F.log_eval(x))


def verify_conjugacy(L, Ltilde, grid: Sequence[float], tol: float = 0.05) -> ConjugacyReport:
    """Residuals of both conjugacy relations on ``grid``; pass iff the right end is within tol."""
    x = np.asarray(grid, dtype=float)
    lx = _value(L, x)
    dev1 = np.abs(lx * _value(Ltilde, x * lx) - 1.0)
    tx = _value(Ltilde, x)
    dev2 = np.abs(tx * _value(L, x * tx) - 1.0)
    return ConjugacyReport(x=x, dev1=dev1, dev2=dev2, tol=tol)


@dataclass
class ConjugatePair:
    L: object
    Ltilde: object
    report: ConjugacyReport
    numeric_report: ConjugacyReport | None = None
    symbolic: bool = False


DEFAULT_GRID = tuple(2.0 ** k for k in (10, 20, 30, 40))


def conjugate_pair(L, grid: Sequence[float] = DEFAULT_GRID, tol: float = 0.05,
                   numeric_tol: float = 1e-12) -> ConjugatePair:
    """Build the preferred conjugate (symbolic wins) and cross-check against the numeric one."""
    num = NumericConjugate(L, numeric_tol)
    num_report = verify_conjugacy(L, num, grid, tol)
    sym = conjugate_symbolic(L)
    if sym is None:
        return ConjugatePair(L, num, num_report, num_report, symbolic=False)
    return ConjugatePair(L, sym, verify_conjugacy(L, sym, grid, tol), num_report, symbolic=True)


def regvar_pair(alpha: float, beta: float, L, Ltilde):
    """The mutually asymptotic-inverse maps ``f(x) = x^{ab} L^a(x^b)`` and
    ``g(x) = x^{1/(ab)} Lt^{1/b}(x^{1/a})``."""

    def f(x):
        return math.exp(_log_f(alpha, beta, L, x))

    def g(x):
        y = x ** (1.0 / alpha)
        return math.exp(math.log(x) / (alpha * beta) + Ltilde.log_eval(y) / beta)

    return f, g


def round_trip_deviation(alpha: float, beta: float, L, Ltilde, x: float) -> tuple[float, float]:
    """``(|f(g(x))/x - 1|, |g(f(x))/x - 1|)``."""
    f, g = regvar_pair(alpha, beta, L, Ltilde)
    return abs(f(g(x)) / x - 1.0), abs(g(f(x)) / x - 1.0)
