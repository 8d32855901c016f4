"""Identically distributed sequences under negative dependence, and statistical checks.

Negatively associated sequences come from an equicorrelated Gaussian copula with
non-positive correlation pushed through the marginal quantile function; both
steps are coordinatewise nondecreasing, so association is preserved.  Long
sequences use independent equicorrelated blocks (a union of independent NA
families is NA).  A checkerboard copula on triples gives pairs that are
negatively dependent without the triple being negatively associated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .distributions import Distribution
from .errors import MalformedPairError, PSDError

SE_BAND = 3.0


class DependenceStructure:
    def to_text(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class IID(DependenceStructure):
    def generate(self, marginal: Distribution, n: int, rng: np.random.Generator,
                 reps: int | None = None) -> np.ndarray:
        if reps is None:
            return marginal.sample(rng, n)
        return marginal.sample(rng, reps * n).reshape(reps, n)

    def to_text(self):
        return "iid"


@dataclass(frozen=True)
class EquicorrelatedCopula(DependenceStructure):
    """Gaussian copula with correlation ``rho`` inside blocks of ``block`` coordinates.

    ``block=None`` puts the whole sequence in one block.  Within a block of
    size m, ``Z_i = a e_i + c sum_j e_j`` with ``a = sqrt(1-rho)`` and
    ``c = (sqrt(a^2 + m rho) - a)/m``, which has unit variances and
    correlation ``rho``; it exists iff ``rho >= -1/(m-1)``.
    """

    rho: float
    block: int | None = None

    def __post_init__(self):
        if not -1.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [-1, 1)")
        if self.block is not None:
            if self.block < 1:
                raise ValueError("block must be >= 1")
            check_psd(self.rho, self.block)

    def gaussian(self, n: int, rng: np.random.Generator, reps: int | None = None) -> np.ndarray:
        """Correlated standard normals, shape (n,) or (reps, n)."""
        m = n if self.block is None else min(self.block, n)
        check_psd(self.rho, m)
        rows = 1 if reps is None else reps
        eps = rng.standard_normal((rows, n))
        if self.rho != 0.0:
            nb = -(-n // m)
            padded = np.zeros((rows, nb * m))
            padded[:, :n] = eps
            # the last block may be short; its correction uses its own size
            sizes = np.full(nb, m, dtype=float)
            sizes[-1] = n - (nb - 1) * m
            blocks = padded.reshape(rows, nb, m)
            a = math.sqrt(1.0 - self.rho)
            c = (np.sqrt(a * a + sizes * self.rho) - a) / sizes
            eps = (a * blocks + (c * blocks.sum(axis=2))[:, :, None]).reshape(rows, nb * m)[:, :n]
        return eps[0] if reps is None else eps

    def generate(self, marginal: Distribution, n: int, rng: np.random.Generator,
                 reps: int | None = None) -> np.ndarray:
        z = self.gaussian(n, rng, reps)
        return marginal.from_normal(z.ravel()).reshape(z.shape)

    def to_text(self):
        base = f"gauss:{self.rho!r}"
        return base if self.block is None else f"{base}:{self.block}"


@dataclass(frozen=True)
class NACopula(EquicorrelatedCopula):
    """Negatively associated member of the equicorrelated family (``rho <= 0``)."""

    def __post_init__(self):
        if self.rho > 0:
            raise ValueError("negative association needs rho <= 0")
        super().__post_init__()

    def to_text(self):
        base = f"na:{self.rho!r}"
        return base if self.block is None else f"{base}:{self.block}"


def check_psd(rho: float, m: int) -> None:
    if m > 1 and rho < -1.0 / (m - 1) - 1e-15:
        raise PSDError(f"rho={rho} < -1/(m-1) = {-1.0 / (m - 1):.6g} for block size {m}")


def max_na_block(rho: float) -> int:
    """Largest block size for which equicorrelation ``rho < 0`` is feasible."""
    return int(math.floor(1.0 - 1.0 / rho + 1e-12)) if rho < 0 else 2**62


@dataclass(frozen=True)
class SamplingWithoutReplacement(DependenceStructure):
    """Draw n items without replacement from ``urn``.

    Without an urn, the urn for length n holds the marginal quantiles at
    ``(i + 1/2)/n``, so every sequence is a uniform random permutation of them.
    """

    urn: tuple[float, ...] | None = None

    def generate(self, marginal: Distribution, n: int, rng: np.random.Generator,
                 reps: int | None = None) -> np.ndarray:
        if self.urn is None:
            pool = marginal.isf((np.arange(n, 0, -1) - 0.5) / n)
        else:
            pool = np.asarray(self.urn, dtype=float)
            if n > pool.size:
                raise ValueError(f"cannot draw {n} items from an urn of {pool.size}")
        if reps is None:
            return rng.permutation(pool)[:n]
        return rng.permuted(np.tile(pool, (reps, 1)), axis=1)[:, :n]

    def to_text(self):
        if self.urn is None:
            return "swr"
        return "swr:" + ",".join(repr(float(v)) for v in self.urn)


_SIGNS = np.array([[s1, s2, s3] for s1 in (1, -1) for s2 in (1, -1) for s3 in (1, -1)], dtype=float)


@dataclass(frozen=True)
class PairwiseNDCheckerboard(DependenceStructure):
    """Independent triples with copula density constant on the eight half-cubes.

    With ``s = +1`` on the lower half and ``-1`` on the upper half of each
    coordinate, the density on a cell is
    ``1 - delta (s1 s2 + s1 s3 + s2 s3) + kappa s1 s2 s3``.  Every pair has
    density ``1 - delta s_i s_j``, which is pairwise negatively dependent; for
    ``kappa > 2 delta`` the triple is not negatively associated.
    """

    delta: float = 0.05
    kappa: float = 0.5

    def __post_init__(self):
        if self.delta < 0 or 3 * self.delta + abs(self.kappa) > 1 + 1e-12:
            raise ValueError("need delta >= 0 and 3 delta + |kappa| <= 1")

    @property
    def cell_probs(self) -> np.ndarray:
        s = _SIGNS
        pair = s[:, 0] * s[:, 1] + s[:, 0] * s[:, 2] + s[:, 1] * s[:, 2]
        return (1.0 - self.delta * pair + self.kappa * s.prod(axis=1)) / 8.0

    def generate(self, marginal: Distribution, n: int, rng: np.random.Generator,
                 reps: int | None = None) -> np.ndarray:
        rows = 1 if reps is None else reps
        nt = -(-n // 3)
        cells = rng.choice(8, size=(rows, nt), p=self.cell_probs)
        upper = (_SIGNS[cells] < 0).reshape(rows, 3 * nt)[:, :n]
        v = 0.5 * (1.0 - rng.random((rows, n)))  # in (0, 1/2]
        out = np.empty((rows, n))
        out[upper] = marginal.isf(v[upper])
        out[~upper] = marginal.ppf(v[~upper])
        return out[0] if reps is None else out

    def to_text(self):
        return f"pnd:{self.delta!r},{self.kappa!r}"


def parse_dependence(text: str) -> DependenceStructure:
    """``iid | na:RHO[:BLOCK] | gauss:RHO[:BLOCK] | swr[:v1,v2,...] | pnd[:DELTA,KAPPA]``"""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "iid":
            return IID()
        if name in ("na", "gauss"):
            rho, _, blk = arg.partition(":")
            cls = NACopula if name == "na" else EquicorrelatedCopula
            return cls(float(rho), int(blk) if blk else None)
        if name == "swr":
            return SamplingWithoutReplacement(tuple(float(v) for v in arg.split(",")) if arg else None)
        if name == "pnd":
            if not arg:
                return PairwiseNDCheckerboard()
            d, k = arg.split(",")
            return PairwiseNDCheckerboard(float(d), float(k))
    except PSDError:
        raise
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad dependence spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown dependence structure {text!r}")


def generate_sequence(struct: DependenceStructure, marginal: Distribution, n: int,
                      rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return struct.generate(marginal, n, rng)


def generate_batch(struct, marginal, n: int, reps: int, rng) -> np.ndarray:
    """``reps`` independent sequences as rows of a (reps, n) array."""
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    return struct.generate(marginal, n, rng, reps)


# -- statistical checks -------------------------------------------------------

def ks_distance(x: np.ndarray, dist: Distribution) -> float:
    """Kolmogorov distance between the empirical law of ``x`` and ``dist``.

    Compares both right limits and left limits at the sample points, so atoms
    of discrete laws are handled exactly.
    """
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    n = xs.size
    u = np.unique(xs)
    right = np.searchsorted(xs, u, side="right") / n
    left = np.searchsorted(xs, u, side="left") / n
    F = dist.cdf(u)
    F_left = dist.cdf(np.nextafter(u, -np.inf))
    return float(max(np.max(np.abs(right - F)), np.max(np.abs(left - F_left))))


@dataclass
class NDReport:
    max_excess: float
    se_at_max: float
    worst_margin: float  # max over points of excess - band * SE
    worst_point: tuple
    reps: int
    band: float = SE_BAND

    @property
    def passed(self) -> bool:
        return self.worst_margin <= 0.0

    def as_dict(self):
        return {"max_excess": self.max_excess, "se_at_max": self.se_at_max,
                "worst_margin": self.worst_margin, "worst_point": list(self.worst_point),
                "reps": self.reps, "band": self.band, "passed": self.passed}


def pairwise_nd_test(struct, marginal, grid_x: Sequence[float], grid_y: Sequence[float],
                     reps: int, rng: np.random.Generator, n: int = 3,
                     samples: np.ndarray | None = None) -> NDReport:
    """Largest ``P(X_i<=x, X_j<=y) - P(X_i<=x) P(X_j<=y)`` over pairs and grid.

    The band is 3 binomial standard errors of the joint frequency at each
    point; the test passes iff the excess stays inside the band everywhere.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    X = generate_batch(struct, marginal, n, reps, rng) if samples is None else np.asarray(samples)
    gx = np.asarray(grid_x, dtype=float)
    gy = np.asarray(grid_y, dtype=float)
    max_excess, se_at_max = -np.inf, 0.0
    worst, where = -np.inf, ()
    for i in range(X.shape[1]):
        A = (X[:, i, None] <= gx[None, :]).astype(float)
        pa = A.mean(axis=0)
        for j in range(i + 1, X.shape[1]):
            B = (X[:, j, None] <= gy[None, :]).astype(float)
            pab = (A.T @ B) / reps
            excess = pab - np.outer(pa, B.mean(axis=0))
            se = np.sqrt(pab * (1.0 - pab) / reps)
            k = np.unravel_index(np.argmax(excess), excess.shape)
            if excess[k] > max_excess:
                max_excess, se_at_max = float(excess[k]), float(se[k])
            margin = excess - SE_BAND * se
            k = np.unravel_index(np.argmax(margin), margin.shape)
            if margin[k] > worst:
                worst, where = float(margin[k]), (i, j, float(gx[k[0]]), float(gy[k[1]]))
    return NDReport(max_excess, se_at_max, worst, where, reps)


@dataclass(frozen=True)
class MonotonePair:
    """Coordinatewise nondecreasing ``f`` on indices ``A`` and ``g`` on ``B``.

    ``f`` and ``g`` receive a (reps, |A|) array and return one value per row.
    """

    f: Callable[[np.ndarray], np.ndarray]
    A: tuple[int, ...]
    g: Callable[[np.ndarray], np.ndarray]
    B: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        if set(self.A) & set(self.B):
            raise MalformedPairError(f"index sets overlap: {sorted(set(self.A) & set(self.B))}")


@dataclass
class CovarianceRow:
    name: str
    cov: float
    se: float

    @property
    def upper(self) -> float:
        return self.cov + SE_BAND * self.se

    @property
    def passed(self) -> bool:
        return self.cov <= SE_BAND * self.se


def na_covariance_test(struct, marginal, pairs: Sequence[MonotonePair], reps: int,
                       rng: np.random.Generator, n: int | None = None,
                       samples: np.ndarray | None = None) -> list[CovarianceRow]:
    """Empirical ``Cov(f(X_A), g(X_B))`` with standard errors from the product influence."""
    if n is None:
        n = 1 + max(max(p.A + p.B) for p in pairs)
    X = generate_batch(struct, marginal, n, reps, rng) if samples is None else np.asarray(samples)
    rows = []
    for p in pairs:
        fa = np.asarray(p.f(X[:, list(p.A)]), dtype=float)
        gb = np.asarray(p.g(X[:, list(p.B)]), dtype=float)
        prod = (fa - fa.mean()) * (gb - gb.mean())
        cov = float(prod.mean())
        se = float(prod.std(ddof=1) / math.sqrt(reps))
        rows.append(CovarianceRow(p.name, cov, se))
    return rows


def finite_population_covariance(urn: Sequence[float]) -> float:
    """Exact ``Cov(X_1, X_2)`` for two draws without replacement: ``-sigma^2/(N-1)``."""
    u = np.asarray(urn, dtype=float)
    return float(-u.var() / (u.size - 1))
