"""Slowly varying functions as closed-form monomials of iterated logarithms.

A :class:`SlowVaryFn` is ``c * prod_k g_k(x + s_k) ** p_k`` where each ``g_k`` is
the identity (depth 0) or the base-2 logarithm iterated ``depth`` times.
Products, real powers and reciprocals of such functions stay in the family, so
the tree is kept in this flattened normal form.  Depth-0 factors with non-zero
power are allowed for contrast experiments; they make the function regularly
(not slowly) varying.

Text grammar (used by the CLI)::

    expr    := term (('*' | '/') term)* [';A=' number]
    term    := 'c:' number | number | base ['^' power] ['@+' number]
    base    := 'x' | 'log' | 'loglog' | 'logloglog' | 'loglogloglog'
               optionally followed by a guard number, so 'loglog4' == 'loglog@+4'
    power   := number | '(' number ['/' number] ')'

``log`` is always base 2.  ``@+A`` shifts the argument of that factor.  A
trailing ``;A=5`` overrides the left end of the validity domain.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    ExpressionSyntaxError,
    NotFoundError,
    NumericOverflowError,
    StepUnderflowError,
)

LN2 = math.log(2.0)
MAX_DEPTH = 4

# log2 iterated d times equals 1 at this argument
_UNIT_POINT = {1: 2.0, 2: 4.0, 3: 16.0, 4: 65536.0}

FD_REL_STEP = 1e-6
SCAN_RATIO = 2.0 ** (1 / 16)


@dataclass(frozen=True, order=True)
class Factor:
    depth: int
    shift: float = 0.0
    power: float = 1.0

    def __post_init__(self):
        if not (0 <= self.depth <= MAX_DEPTH):
            raise ValueError(f"depth must be in [0, {MAX_DEPTH}], got {self.depth}")
        if not (math.isfinite(self.power) and math.isfinite(self.shift)):
            raise ValueError("factor power and shift must be finite")

    def min_argument(self) -> float:
        """Smallest x where the factor is >= 1 (depth >= 1) or positive (depth 0)."""
        if self.depth == 0:
            return -self.shift
        return _UNIT_POINT[self.depth] - self.shift


def _normalize(factors: Iterable[Factor]) -> tuple[Factor, ...]:
    merged: dict[tuple[int, float], float] = {}
    for f in factors:
        key = (f.depth, float(f.shift))
        merged[key] = merged.get(key, 0.0) + float(f.power)
    out = [Factor(d, s, p) for (d, s), p in merged.items() if p != 0.0]
    return tuple(sorted(out))


@dataclass(frozen=True)
class SlowVaryFn:
    """Immutable monomial ``const * prod factor(x)``, valid on ``[domain_low, inf)``."""

    const: float = 1.0
    factors: tuple[Factor, ...] = ()
    domain_low: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.const) and self.const > 0):
            raise ValueError(f"constant must be positive and finite, got {self.const}")
        object.__setattr__(self, "const", float(self.const))
        object.__setattr__(self, "factors", _normalize(self.factors))
        if self.domain_low is None:
            object.__setattr__(self, "domain_low", self.default_domain())
        else:
            a = float(self.domain_low)
            if not a > 0:
                raise ValueError("domain_low must be positive")
            object.__setattr__(self, "domain_low", a)
            # raises DomainError when some factor is non-positive at the left end
            self.log_eval(a)

    # -- construction helpers -------------------------------------------------
    def default_domain(self) -> float:
        lows = [1.0] + [f.min_argument() for f in self.factors]
        return float(max(lows))

    @classmethod
    def constant(cls, c: float) -> "SlowVaryFn":
        return cls(const=c)

    @classmethod
    def log(cls, power: float = 1.0, depth: int = 1, shift: float = 0.0) -> "SlowVaryFn":
        return cls(factors=(Factor(depth, shift, power),))

    def __mul__(self, other: "SlowVaryFn") -> "SlowVaryFn":
        if not isinstance(other, SlowVaryFn):
            return NotImplemented
        return SlowVaryFn(self.const * other.const, self.factors + other.factors,
                          max(self.domain_low, other.domain_low))

    def __pow__(self, p: float) -> "SlowVaryFn":
        p = float(p)
        return SlowVaryFn(self.const ** p,
                          tuple(Factor(f.depth, f.shift, f.power * p) for f in self.factors),
                          self.domain_low)

    def reciprocal(self) -> "SlowVaryFn":
        return self ** -1.0

    def scaled(self, a: float) -> "SlowVaryFn":
        return SlowVaryFn(self.const * a, self.factors, self.domain_low)

    def with_domain(self, a: float) -> "SlowVaryFn":
        return SlowVaryFn(self.const, self.factors, a)

    @property
    def is_slowly_varying(self) -> bool:
        return all(f.depth > 0 for f in self.factors)

    def exponents(self) -> tuple[float, ...]:
        """Asymptotic exponents on ``(x, log x, loglog x, ...)``; shifts and constants drop out."""
        e = [0.0] * (MAX_DEPTH + 1)
        for f in self.factors:
            e[f.depth] += f.power
        return tuple(e)

    # -- evaluation -----------------------------------------------------------
    def _check_domain(self, x):
        xmin = np.min(x) if isinstance(x, np.ndarray) else x
        if not xmin >= self.domain_low:
            raise DomainError(f"x={xmin} below domain_low={self.domain_low}")

    def log_eval(self, x):
        """Natural log of L(x); scalar or array."""
        self._check_domain(x)
        if isinstance(x, np.ndarray):
            return self._log_eval_array(x.astype(float))
        out = math.log(self.const)
        for f in self.factors:
            v = x + f.shift
            for _ in range(f.depth):
                if v <= 0:
                    raise DomainError(f"iterated log of non-positive argument at x={x}")
                v = math.log2(v)
            if v <= 0:
                raise DomainError(f"factor {f} non-positive at x={x}")
            out += f.power * math.log(v)
        return out

    def value(self, x):
        """L(x) as a direct product (exact for small integer powers); falls back to logs."""
        self._check_domain(x)
        arr = isinstance(x, np.ndarray)
        out = np.full(x.shape, self.const) if arr else self.const
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for f in self.factors:
                v = x + f.shift
                for _ in range(f.depth):
                    v = np.log2(v) if arr else math.log2(v) if v > 0 else -1.0
                if np.any(np.asarray(v) <= 0):
                    raise DomainError(f"factor {f} non-positive at x={x}")
                if arr:
                    out = out * v ** f.power
                else:
                    try:
                        out = out * math.pow(v, f.power)
                    except OverflowError:
                        out = math.inf
        if np.all(np.isfinite(out)) and np.all(np.asarray(out) > 0):
            return out
        lv = self.log_eval(x)
        if arr:
            return np.exp(lv)
        return math.exp(lv) if lv < 709.7 else math.inf

    def _log_eval_array(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape, math.log(self.const))
        with np.errstate(divide="ignore", invalid="ignore"):
            for f in self.factors:
                v = x + f.shift
                for _ in range(f.depth):
                    v = np.log2(v)
                if not np.all(v > 0):
                    raise DomainError(f"factor {f} non-positive on part of the input")
                out = out + f.power * np.log(v)
        return out

    def log_eval_log(self, u):
        """ln L(e^u), stable for arbitrarily large ``u`` (x itself is never formed)."""
        u = np.asarray(u, dtype=float)
        if np.any(np.exp(np.minimum(u, 700.0)) < self.domain_low * (1 - 1e-12)):
            raise DomainError("argument below domain_low")
        out = np.full(u.shape, math.log(self.const))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for f in self.factors:
                # ln(x + s) = u + log1p(s e^{-u})
                lnv = u + np.log1p(f.shift * np.exp(-u))
                if f.depth == 0:
                    out = out + f.power * lnv
                    continue
                v = lnv / LN2
                for _ in range(f.depth - 1):
                    v = np.log2(v)
                if not np.all(v > 0):
                    raise DomainError(f"factor {f} non-positive on part of the input")
                out = out + f.power * np.log(v)
        return out if out.ndim else float(out)

    def __call__(self, x):
        return evaluate(self, x)

    def __str__(self) -> str:
        return to_text(self)


class CallableSVF:
    """Wraps an arbitrary positive function handle; never conjugated symbolically."""

    def __init__(self, func: Callable[[float], float], domain_low: float, name: str = "<callable>"):
        self.func = func
        self.domain_low = float(domain_low)
        self.name = name

    def log_eval(self, x):
        if isinstance(x, np.ndarray):
            return np.log(np.array([self.func(float(t)) for t in x.ravel()])).reshape(x.shape)
        return math.log(self.func(float(x)))

    def log_eval_log(self, u):
        u = np.asarray(u, dtype=float)
        vals = [math.log(self.func(math.exp(t))) for t in u.ravel()]
        out = np.array(vals).reshape(u.shape)
        return out if out.ndim else float(out)

    def exponents(self):
        return None

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self) -> str:
        return f"CallableSVF({self.name}, A={self.domain_low})"


# -- operations ---------------------------------------------------------------

def evaluate(L, x):
    """L(x) for scalar or array ``x >= L.domain_low``."""
    xmin = np.min(x) if isinstance(x, np.ndarray) else x
    if not xmin >= L.domain_low:
        raise DomainError(f"x={xmin} below domain_low={L.domain_low}")
    with np.errstate(over="ignore"):
        if isinstance(L, SlowVaryFn):
            val = L.value(x)
        else:
            lv = L.log_eval(x)
            val = np.exp(lv) if isinstance(lv, np.ndarray) else math.exp(lv) if lv < 709.7 else math.inf
    if not np.all(np.isfinite(val)) or np.any(np.asarray(val) <= 0):
        raise NumericOverflowError(f"non-finite value of {L} near x={xmin}")
    return val


@dataclass(frozen=True)
class RegVaryFn:
    """``R(x) = x^rho L(x)``."""

    rho: float
    L: object

    @property
    def domain_low(self) -> float:
        return self.L.domain_low

    def log_eval(self, x):
        if isinstance(x, np.ndarray):
            return self.rho * np.log(x) + self.L.log_eval(x)
        return self.rho * math.log(x) + self.L.log_eval(x)

    def __call__(self, x):
        if isinstance(x, np.ndarray):
            return x**self.rho * evaluate(self.L, x)
        return float(x) ** self.rho * evaluate(self.L, x)

    def index_deviation(self, lam: float, grid: Sequence[float]) -> float:
        """max over the grid of ``|R(lam x)/R(x) - lam^rho|``."""
        x = np.asarray(grid, dtype=float)
        r = np.exp(self.log_eval(lam * x) - self.log_eval(x))
        return float(np.max(np.abs(r - lam**self.rho)))


def geometric_grid(start: float, stop: float, ratio: float = 2.0) -> np.ndarray:
    """``start * ratio**k`` for all k with value <= stop."""
    if not (start > 0 and ratio > 1 and stop >= start):
        raise ValueError("need 0 < start <= stop and ratio > 1")
    k = int(math.floor(math.log(stop / start) / math.log(ratio) + 1e-12))
    return start * ratio ** np.arange(k + 1, dtype=float)


def slow_variation_deviation(L, lam: float, grid: Sequence[float]) -> float:
    """max over the grid of ``|L(lam x)/L(x) - 1|``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    x = np.asarray(grid, dtype=float)
    r = np.exp(L.log_eval(lam * x) - L.log_eval(x))
    return float(np.max(np.abs(r - 1.0)))


def log_derivative_ratio(L, x: float) -> float:
    """Central-difference estimate of ``x L'(x) / L(x)`` with step ``x * 1e-6``.

    Falls back to a forward difference when ``x - h`` leaves the domain.
    """
    x = float(x)
    if x < L.domain_low:
        raise DomainError(f"x={x} below domain_low={L.domain_low}")
    h = x * FD_REL_STEP
    if h == 0.0 or x + h == x:
        raise StepUnderflowError(f"step underflow at x={x}")
    lo = x - h if x - h >= L.domain_low else x
    hi = x + h
    d_log = (L.log_eval(hi) - L.log_eval(lo)) / (hi - lo)
    return x * d_log


def monotone_threshold(L, p: float, direction: str = "increasing",
                       grid: Sequence[float] | None = None) -> float:
    """Smallest grid point B such that ``x**(+-p) L(x)`` is monotone on grid[B:].

    ``direction='increasing'`` tests ``x**p L(x)``, ``'decreasing'`` tests
    ``x**-p L(x)``.  The default grid is geometric (ratio ``2**(1/16)``) from
    ``L.domain_low`` to ``2**64``; a coarser grid can miss a dip between points.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    if direction not in ("increasing", "decreasing"):
        raise ValueError("direction must be 'increasing' or 'decreasing'")
    if grid is None:
        return _default_threshold(L, float(p), direction)
    x = np.asarray(grid, dtype=float)
    return _scan_threshold(L, float(p), direction, x)


def _scan_threshold(L, p, direction, x):
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("scan grid must be strictly increasing with >= 2 points")
    if x[0] < L.domain_low:
        raise DomainError("scan grid starts below domain_low")
    sign = 1.0 if direction == "increasing" else -1.0
    lh = sign * p * np.log(x) + L.log_eval(x)
    d = np.diff(lh)
    # relative slack for rounding in flat stretches (e.g. constant L, p tiny)
    slack = 1e-12 * np.maximum(np.abs(lh[1:]), 1.0)
    ok = d >= -slack if direction == "increasing" else d <= slack
    if not ok[-1]:
        raise NotFoundError(f"x^{sign * p:+g} L(x) not {direction} at the end of the scan")
    bad = np.nonzero(~ok)[0]
    i = 0 if bad.size == 0 else int(bad[-1]) + 1
    return float(x[i])


@lru_cache(maxsize=256)
def _default_threshold(L, p, direction):
    return _scan_threshold(L, p, direction, geometric_grid(L.domain_low, 2.0 ** 64, SCAN_RATIO))


# -- text grammar -------------------------------------------------------------

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(
    rf"""\s*(?:
        (?P<const>c:(?P<cval>{_NUM}))
      | (?P<base>(?P<logs>(?:log)+)(?P<guard>\d+(?:\.\d+)?)?|x)
      | (?P<num>{_NUM})
    )""",
    re.VERBOSE,
)
_POWER = re.compile(rf"\s*\^\s*(?:\(\s*(?P<pn>{_NUM})\s*(?:/\s*(?P<pd>{_NUM})\s*)?\)|(?P<p>{_NUM}))")
_SHIFT = re.compile(rf"\s*@\+\s*(?P<s>{_NUM})")
_OP = re.compile(r"\s*([*/])")
_DOMAIN = re.compile(rf"\s*;\s*A\s*=\s*(?P<a>{_NUM})\s*$")


def parse(text: str) -> SlowVaryFn:
    """Parse the mini-grammar documented in the module docstring."""
    src = text.strip()
    domain = None
    m = _DOMAIN.search(src)
    if m:
        domain = float(m.group("a"))
        src = src[: m.start()]
    if not src:
        raise ExpressionSyntaxError("empty expression")
    const = 1.0
    factors: list[Factor] = []
    pos, sign = 0, 1.0
    while True:
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected input at {pos}: {src[pos:]!r}")
        pos = m.end()
        if m.group("const") or m.group("num"):
            c = float(m.group("cval") or m.group("num"))
            if c <= 0:
                raise ExpressionSyntaxError("constants must be positive")
            const *= c ** sign
        else:
            base = m.group("base")
            depth = 0 if base == "x" else len(m.group("logs")) // 3
            if depth > MAX_DEPTH:
                raise ExpressionSyntaxError(f"at most {MAX_DEPTH} nested logs")
            shift = float(m.group("guard") or 0.0)
            power = 1.0
            pm = _POWER.match(src, pos)
            if pm:
                pos = pm.end()
                if pm.group("p") is not None:
                    power = float(pm.group("p"))
                else:
                    den = float(pm.group("pd")) if pm.group("pd") else 1.0
                    power = float(pm.group("pn")) / den
            sm = _SHIFT.match(src, pos)
            if sm:
                if m.group("guard"):
                    raise ExpressionSyntaxError("guard digits and '@+' both given")
                pos = sm.end()
                shift = float(sm.group("s"))
            factors.append(Factor(depth, shift, sign * power))
        if pos == len(src) or not src[pos:].strip():
            break
        om = _OP.match(src, pos)
        if not om:
            raise ExpressionSyntaxError(f"expected '*' or '/' at {pos}: {src[pos:]!r}")
        sign = 1.0 if om.group(1) == "*" else -1.0
        pos = om.end()
    return SlowVaryFn(const, tuple(factors), domain)


def _fmt(v: float) -> str:
    return repr(float(v))


def _factor_text(f: Factor, power: float) -> str:
    base = "x" if f.depth == 0 else "log" * f.depth
    s = base
    if power != 1.0:
        s += "^" + (_fmt(power) if power > 0 else f"({_fmt(power)})")
    if f.shift != 0.0:
        s += "@+" + _fmt(f.shift)
    return s


def to_text(L: SlowVaryFn) -> str:
    """Canonical text; ``parse(to_text(L)) == L``."""
    num = [f"c:{_fmt(L.const)}"] if L.const != 1.0 else []
    den = []
    for f in L.factors:
        if f.power > 0:
            num.append(_factor_text(f, f.power))
        else:
            den.append(_factor_text(f, -f.power))
    out = "*".join(num) if num else "1"
    for d in den:
        out += "/" + d
    if L.domain_low != L.default_domain():
        out += f";A={_fmt(L.domain_low)}"
    return out


# -- built-ins used across tests and the CLI -----------------------------------

def iterated_log_weight(gamma: float) -> SlowVaryFn:
    """``1 / (log x * loglog(4+x)**(1+gamma))``: integrable weight for a 1/x^2 tail."""
    return SlowVaryFn(factors=(Factor(1, 0.0, -1.0), Factor(2, 4.0, -(1.0 + gamma))))


BUILTINS: dict[str, SlowVaryFn] = {
    "const3": SlowVaryFn.constant(3.0),
    "log": SlowVaryFn.log(1.0),
    "log2": SlowVaryFn.log(2.0),
    "log^-1/3": SlowVaryFn.log(-1.0 / 3.0),
    "loglog4": SlowVaryFn.log(1.0, depth=2, shift=4.0),
    "log*loglog4^1.1": SlowVaryFn(factors=(Factor(1, 0.0, 1.0), Factor(2, 4.0, 1.1))),
}
