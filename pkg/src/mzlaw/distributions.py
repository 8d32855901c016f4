"""Marginal laws with exact tails, inverse-CDF sampling and moment functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
import numpy as np
from scipy import integrate, special

from .asymptotics import deciding_level, integral_converges, loglog_slope, pad
from .svf import LN2

# moments and tails are integrated up to |x| = 2**CUTOFF_LOG2
CUTOFF_LOG2 = 1000
_T_CUT = CUTOFF_LOG2 * LN2


def _quad(f, a, b, **kw):
    kw.setdefault("limit", 400)
    kw.setdefault("epsabs", 0.0)
    kw.setdefault("epsrel", 1e-10)
    return integrate.quad(f, a, b, **kw)[0]


def _split_quad(f, a, b):
    # integrate over geometrically growing pieces; keeps quad honest on long ranges
    edges = [a]
    step = 1.0
    while edges[-1] + step < b:
        edges.append(edges[-1] + step)
        step *= 2.0
    edges.append(b)
    return math.fsum(_quad(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


class Distribution:
    """Interface shared by every marginal law.

    ``isf(q)`` returns x with ``P(X > x) = q``; ``log_tail(v)`` is
    ``ln P(|X| > e^v)`` (vectorized); ``tail_prob(t)`` is ``P(|X| > t)``.
    Unbounded laws expose ``density_exponents`` / ``tail_exponents`` for |X|.
    """

    support_bound: float = math.inf
    density_exponents: tuple[float, ...] | None = None
    tail_exponents: tuple[float, ...] | None = None
    mean: float = 0.0

    def ppf(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def from_normal(self, z):
        """``F^{-1}(Phi(z))`` accurate in both tails."""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        hi = z > 0
        out[hi] = self.isf(special.ndtr(-z[hi]))
        out[~hi] = self.ppf(special.ndtr(z[~hi]))
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.isf(1.0 - rng.random(size))

    def to_text(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Rademacher(Distribution):
    support_bound = 1.0

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q < 0.5, 1.0, -1.0)

    def sample(self, rng, size):
        return 2.0 * rng.integers(0, 2, size) - 1.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < -1, 0.0, np.where(x < 1, 0.5, 1.0))

    def tail_prob(self, t):
        return np.where(np.asarray(t, dtype=float) < 1.0, 1.0, 0.0)

    def log_tail(self, v):
        return np.where(np.asarray(v, dtype=float) < 0.0, 0.0, -np.inf)

    def expect_abs(self, log_h) -> float:
        return math.exp(log_h(np.array([1.0]))[0])

    def to_text(self):
        return "rademacher"


@dataclass(frozen=True)
class CenteredUniform(Distribution):
    """Uniform on [-1, 1]."""

    support_bound = 1.0

    def isf(self, q):
        return 1.0 - 2.0 * np.asarray(q, dtype=float)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) + 1.0) / 2.0, 0.0, 1.0)

    def tail_prob(self, t):
        return np.clip(1.0 - np.asarray(t, dtype=float), 0.0, 1.0)

    def log_tail(self, v):
        with np.errstate(divide="ignore"):
            return np.log(self.tail_prob(np.exp(np.asarray(v, dtype=float))))

    def expect_abs(self, log_h) -> float:
        return _quad(lambda x: math.exp(log_h(np.array([x]))[0]) if x > 0 else 0.0, 0.0, 1.0)

    def to_text(self):
        return "uniform"


@dataclass(frozen=True)
class UserTable(Distribution):
    """Finite discrete law; ``values`` ascending, ``probs`` summing to 1."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        p = tuple(float(x) for x in self.probs)
        if len(v) != len(p) or not v:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", tuple(v[i] for i in order))
        object.__setattr__(self, "probs", tuple(p[i] for i in order))

    @property
    def support_bound(self):
        return max(abs(x) for x in self.values)

    @property
    def mean(self):
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @cached_property
    def _cum(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self._cum, u, side="left")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def isf(self, q):
        return self.ppf(1.0 - np.asarray(q, dtype=float))

    def sample(self, rng, size):
        return self.ppf(rng.random(size))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.values)
        idx = np.searchsorted(v, x, side="right")
        return np.concatenate([[0.0], self._cum])[idx]

    def tail_prob(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(np.asarray(self.values))
        p = np.asarray(self.probs)
        return np.array([p[a > s].sum() for s in t.ravel()]).reshape(t.shape)

    def log_tail(self, v):
        with np.errstate(divide="ignore"):
            return np.log(self.tail_prob(np.exp(np.asarray(v, dtype=float))))

    def expect_abs(self, log_h) -> float:
        a = np.abs(np.asarray(self.values))
        with np.errstate(divide="ignore"):
            h = np.exp(log_h(a))
        return math.fsum(np.asarray(self.probs) * h)

    def to_text(self):
        if self.values == (0.0,):
            return "point:0.0"
        return "table:" + ",".join(f"{v!r}:{p!r}" for v, p in zip(self.values, self.probs))


def point_mass(value: float = 0.0) -> UserTable:
    return UserTable((value,), (1.0,))


@dataclass(frozen=True)
class ParetoTail(Distribution):
    """Symmetric Pareto: ``P(|X| > x) = x^-alpha`` for x >= 1."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def mean(self):
        return 0.0 if self.alpha > 1 else math.nan

    @property
    def density_exponents(self):
        return (-(self.alpha + 1.0),)

    @property
    def tail_exponents(self):
        return (-self.alpha,)

    def isf_abs(self, q):
        return np.asarray(q, dtype=float) ** (-1.0 / self.alpha)

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(q <= 0.5, self.isf_abs(2 * q), -self.isf_abs(2 * (1 - q)))

    def ppf(self, u):
        return -self.isf(u)

    def sample(self, rng, size):
        sign = 2.0 * rng.integers(0, 2, size) - 1.0
        return sign * self.isf_abs(1.0 - rng.random(size))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * np.minimum(1.0, np.maximum(np.abs(x), 1.0) ** -self.alpha)
        return np.where(x >= 0, 1.0 - half, half)

    def tail_prob(self, t):
        t = np.asarray(t, dtype=float)
        return np.minimum(1.0, np.maximum(t, 1.0) ** -self.alpha)

    def log_tail(self, v):
        return -self.alpha * np.maximum(np.asarray(v, dtype=float), 0.0)

    def log_density_log(self, t):
        # ln of the |X| density at e^t
        return math.log(self.alpha) - (self.alpha + 1.0) * np.asarray(t, dtype=float)

    def expect_abs(self, log_h_log) -> float:
        a = self.alpha
        return _split_quad(lambda t: math.exp(log_h_log(t) + math.log(a) - a * t), 0.0, _T_CUT)

    def to_text(self):
        return f"pareto:{self.alpha!r}"


@dataclass(frozen=True)
class StPetersburg(Distribution):
    """``P(X = 2^k) = 2^-k``, k >= 1, sampled through the trial count."""

    mean = math.inf
    density_exponents = (-2.0,)
    tail_exponents = (-1.0,)

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            k = np.maximum(1.0, np.ceil(-np.log2(q)))
        return 2.0 ** k

    def sample(self, rng, size):
        return 2.0 ** rng.geometric(0.5, size)

    def cdf(self, x):
        return 1.0 - self.tail_prob(np.maximum(np.asarray(x, dtype=float), 0.0))

    def tail_prob(self, t):
        t = np.asarray(t, dtype=float)
        # frexp gives floor(log2 t) exactly, also just below a power of two
        m = np.frexp(np.maximum(t, 1.0))[1] - 1.0
        return np.where(t < 2.0, 1.0, 2.0 ** -m)

    def log_tail(self, v):
        v = np.asarray(v, dtype=float)
        # v = k ln 2 computed in floating point may land a hair below k ln 2
        m = np.floor(v / LN2 + 1e-12)
        return np.where(v < LN2, 0.0, -m * LN2)

    def expect_abs(self, log_h_log) -> float:
        k = np.arange(1, CUTOFF_LOG2 + 1, dtype=float)
        terms = np.exp(-k * LN2 + np.array([log_h_log(t) for t in k * LN2]))
        return math.fsum(terms)

    def to_text(self):
        return "stpetersburg"


@dataclass(frozen=True)
class LogCorrectedPareto(Distribution):
    """Symmetric law with density
    ``b |x|^{-alpha-1} / (log2(|x|+2)^{1-alpha/gamma} * log2(log2(|x|+2))^2)`` on |x| > 1.
    """

    alpha: float
    gamma: float

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0 and self.gamma > 0):
            raise ValueError("need 1 < alpha < 2 and gamma > 0")

    @property
    def _c1(self):
        return 1.0 - self.alpha / self.gamma

    @property
    def density_exponents(self):
        return (-(self.alpha + 1.0), -self._c1, -2.0)

    @property
    def tail_exponents(self):
        return (-self.alpha, -self._c1, -2.0)

    def _log_slow(self, t):
        # slowly varying part of the density at |x| = e^t
        t = np.asarray(t, dtype=float)
        l1 = (t + np.log1p(2.0 * np.exp(-t))) / LN2
        return -self._c1 * np.log(l1) - 2.0 * np.log(np.log2(l1))

    def log_density_log(self, t):
        """ln of the |X| density (both signs folded) at |x| = e^t."""
        return math.log(2.0 * self.norm_const) - (self.alpha + 1.0) * np.asarray(t, float) + self._log_slow(t)

    @cached_property
    def norm_const(self) -> float:
        """b, solved by quadrature in ``s = log2 x``."""
        a = self.alpha

        def integrand(s):
            t = s * LN2
            return math.exp(-a * t + float(self._log_slow(t))) * LN2

        total = 2.0 * _split_quad(integrand, 0.0, 4000.0)
        return 1.0 / total

    def _tail_quad(self, v: float) -> float:
        """ln P(|X| > e^v) for v >= 0 by quadrature of the shifted tail integral."""
        a = self.alpha
        ls_v = float(self._log_slow(v))
        inner = _quad(lambda y: math.exp(-a * y + float(self._log_slow(v + y)) - ls_v), 0.0, np.inf)
        return math.log(2.0 * self.norm_const) - a * v + ls_v + math.log(inner)

    def tail_prob(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            v = np.log(np.maximum(t, 1.0))
        return np.exp(self.log_tail(v))

    @cached_property
    def _table(self):
        # ln-tail on a grid in t = ln|x|: fine near the origin, coarser far out
        tg = np.concatenate([np.arange(0.0, 50.0, 1e-3), np.arange(50.0, 1000.0 + 1e-9, 1e-2)])
        nodes, weights = np.polynomial.legendre.leggauss(8)
        lo, hi = tg[:-1], tg[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        lv = self.log_density_log(pts) + pts
        ref = lv[:, :1]
        log_seg = np.log((np.exp(lv - ref) * weights[None, :]).sum(axis=1) * half) + ref[:, 0]
        # accumulate from the far end in log space so deep tails do not underflow
        acc = np.logaddexp.accumulate(np.concatenate([[self._tail_quad(tg[-1])], log_seg[::-1]]))
        return tg, acc[::-1]

    def log_tail(self, v):
        v = np.asarray(v, dtype=float)
        tg, G = self._table
        out = np.interp(v, tg, G)
        out = np.where(v <= 0, 0.0, out)
        far = v > tg[-1]
        if np.any(far):
            out[far] = [self._tail_quad(float(s)) for s in v[far]]
        return out

    def isf_abs(self, q):
        """|x| with ``P(|X| > x) = q`` by interpolating the ln-tail table."""
        q = np.asarray(q, dtype=float)
        tg, G = self._table
        with np.errstate(divide="ignore"):
            t = np.interp(np.log(q), G[::-1], tg[::-1])
        return np.exp(t)

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= 0.5, self.isf_abs(2 * q), -self.isf_abs(2 * (1 - q)))

    def ppf(self, u):
        return -self.isf(u)

    def sample(self, rng, size):
        sign = 2.0 * rng.integers(0, 2, size) - 1.0
        return sign * self.isf_abs(1.0 - rng.random(size))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * self.tail_prob(np.abs(x))
        return np.where(x >= 0, 1.0 - half, half)

    def expect_abs(self, log_h_log) -> float:
        f = lambda t: math.exp(log_h_log(t) + float(self.log_density_log(t)) + t)
        return _split_quad(f, 0.0, _T_CUT)

    def to_text(self):
        return f"logpareto:{self.alpha!r},{self.gamma!r}"


def parse_distribution(text: str) -> Distribution:
    """``rademacher | uniform | stpetersburg | pareto:A | logpareto:A,G | point:V | table:v:p,...``"""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "rademacher":
            return Rademacher()
        if name == "uniform":
            return CenteredUniform()
        if name == "stpetersburg":
            return StPetersburg()
        if name == "pareto":
            return ParetoTail(float(arg))
        if name == "logpareto":
            a, g = arg.split(",")
            return LogCorrectedPareto(float(a), float(g))
        if name == "point":
            return point_mass(float(arg or 0.0))
        if name == "table":
            pairs = [item.rsplit(":", 1) for item in arg.split(",")]
            return UserTable(tuple(float(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad distribution spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown distribution {text!r}")


# -- moment functional --------------------------------------------------------

@dataclass(frozen=True)
class MomentSpec:
    """The functional ``E |X|^alpha L^alpha(|X| + A)``; A defaults to L's domain start."""

    alpha: float
    L: object
    shift: float | None = None

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if self.shift is None:
            object.__setattr__(self, "shift", float(self.L.domain_low))
        if self.shift < 0:
            raise ValueError("shift must be non-negative")

    def log_h(self, x):
        """ln(x^alpha L^alpha(x + A)) for x >= 0 (array)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return self.alpha * (np.log(x) + self.L.log_eval(x + self.shift))

    def log_h_log(self, t: float) -> float:
        """Same, at x = e^t, without forming x when it is huge."""
        lxa = t + math.log1p(self.shift * math.exp(-t)) if t < 700 else t
        return self.alpha * (t + float(self.L.log_eval_log(lxa)))

    def exponents(self):
        e = self.L.exponents()
        if e is None:
            return None
        e = pad(e)
        return (self.alpha * (1.0 + e[0]),) + tuple(self.alpha * v for v in e[1:])


@dataclass
class MomentResult:
    kind: str  # 'finite' | 'infinite' | 'inconclusive'
    value: float | None
    diagnostics: dict = field(default_factory=dict)


SLOPE_BAND = 0.05


def moment_value(dist: Distribution, m: MomentSpec) -> MomentResult:
    """Classify ``E |X|^alpha L^alpha(|X|+A)`` and compute it when finite.

    Bounded laws are summed exactly.  Otherwise the integrand's exponent vector
    (density exponents plus those of ``x^alpha L^alpha``) decides: index below
    -1 is finite, above -1 infinite, and at -1 the log corrections are compared
    level by level.  Without exponent data the index is estimated from log-log
    slopes far out and boundary cases are reported as inconclusive.
    """
    diag: dict = {}
    if math.isfinite(dist.support_bound):
        return MomentResult("finite", dist.expect_abs(m.log_h), {"method": "bounded support"})

    dexp, hexp = dist.density_exponents, m.exponents()
    if dexp is not None and hexp is not None:
        d, h = pad(dexp), pad(hexp)
        e = tuple(a + b for a, b in zip(d, h))
        diag.update(exponents=e, deciding_level=deciding_level(e), method="exponent test")
        finite = integral_converges(e)
    elif hasattr(dist, "log_density_log"):
        t = np.linspace(350.0, 690.0, 18)
        ly = np.array([m.log_h_log(s) for s in t]) + dist.log_density_log(t) + t
        idx = loglog_slope(t, ly) - 1.0
        diag.update(index=idx, method="slope")
        if abs(idx + 1.0) <= SLOPE_BAND:
            return MomentResult("inconclusive", None, diag)
        finite = idx < -1.0
    else:
        return MomentResult("inconclusive", None, {"method": "no tail data"})

    if not finite:
        diag["truncated_values"] = {
            str(k): _truncated(dist, m, k) for k in (16, 64, 256)
        }
        return MomentResult("infinite", None, diag)
    value = dist.expect_abs(m.log_h_log)
    lvl = diag.get("deciding_level")
    # at the index boundary the mass beyond the cutoff is not negligible
    diag["lower_bound_only"] = bool(lvl is not None and lvl > 0)
    diag["cutoff_log2"] = CUTOFF_LOG2
    return MomentResult("finite", value, diag)


def _truncated(dist, m, k_log2):
    if isinstance(dist, StPetersburg):
        ks = np.arange(1, k_log2 + 1, dtype=float)
        return math.fsum(np.exp(-ks * LN2 + np.array([m.log_h_log(t) for t in ks * LN2])))
    f = lambda t: math.exp(m.log_h_log(t) + float(dist.log_density_log(t)) + t)
    return _split_quad(f, 0.0, k_log2 * LN2)
