"""Two independent classifiers for the moment condition and the tail series over b_n.

``E |X|^alpha L^alpha(|X| + A) < inf`` holds exactly when
``sum_n P(|X| > b_n) < inf`` with ``b_n = n^{1/alpha} Lt(n^{1/alpha})``.  The
moment side integrates the density; the series side sums the tail at b_n.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .asymptotics import compose_tail, integral_converges, loglog_slope
from .distributions import Distribution, MomentSpec, moment_value
from .errors import HypothesisError, NotFoundError
from .normalizer import NormalizingSeq, sequence_from_L
from .svf import LN2, monotone_threshold

EXACT_LIMIT_LOG2 = 14
STRATA = 1024
# far-field blocks 2^k used for the index estimate, and points per block
SLOPE_BLOCKS = np.arange(450, 901, 50)
SLOPE_POINTS = 16
INDEX_BAND = 0.05

FINITE, INFINITE = "finite", "infinite"
CONVERGENT, DIVERGENT, INCONCLUSIVE = "convergent", "divergent", "inconclusive"


def _log_terms(dist: Distribution, seq: NormalizingSeq, log_n: np.ndarray) -> np.ndarray:
    return dist.log_tail(seq.log_b(log_n))


def _block_sum(dist, seq, k: int, start: int) -> float:
    """Sum of P(|X| > b_n) over n in [max(2^k, start), 2^{k+1})."""
    lo, hi = max(1 << k, start), 1 << (k + 1)
    if lo >= hi:
        return 0.0
    if k < EXACT_LIMIT_LOG2:
        n = np.arange(lo, hi, dtype=float)
        return math.fsum(np.exp(_log_terms(dist, seq, np.log(n))))
    # stratified midpoints: deterministic, error O(width^2 f'') per stratum
    width = (hi - lo) / STRATA
    n = lo + (np.arange(STRATA) + 0.5) * width
    return width * math.fsum(np.exp(_log_terms(dist, seq, np.log(n))))


def tail_index(dist, seq) -> float:
    """Regular-variation index of ``n -> P(|X| > b_n)`` from far dyadic blocks.

    Block averages are computed in log space at ``n = 2^k (1 + (j+1/2)/m)``, so
    indices up to ``2^900`` are reachable without forming n.
    """
    frac = np.log1p((np.arange(SLOPE_POINTS) + 0.5) / SLOPE_POINTS)
    log_n = SLOPE_BLOCKS[:, None] * LN2 + frac[None, :]
    lt = _log_terms(dist, seq, log_n.ravel()).reshape(log_n.shape)
    if np.any(~np.isfinite(lt)):
        return -math.inf
    avg = logsumexp(lt, axis=1) - math.log(SLOPE_POINTS)
    return loglog_slope(SLOPE_BLOCKS * LN2, avg)


@dataclass
class SeriesResult:
    verdict: str
    index: float | None
    block_k: list[int]
    block_sums: list[float]
    partial_sums: list[float]
    composed_exponents: tuple | None = None
    method: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,block_sum,partial_sum\n")
        for k, b, s in zip(self.block_k, self.block_sums, self.partial_sums):
            buf.write(f"{2 ** (k + 1)},{b!r},{s!r}\n")
        return buf.getvalue()


def tail_series_classify(dist: Distribution, seq: NormalizingSeq, horizon: int = 2**20,
                         workers: int = 1) -> SeriesResult:
    """Partial sums of ``P(|X| > b_n)`` by dyadic blocks plus an index-based verdict.

    Blocks below ``2^14`` are summed exactly; larger blocks use 1024 stratified
    midpoints.  The verdict comes from the index estimated far out: below
    ``-1 - 0.05`` convergent, above ``-1 + 0.05`` divergent.  In the band the
    exponent vector of the composed tail decides, and without one the result
    is inconclusive.
    """
    if horizon < 2**16:
        raise ValueError("horizon must be >= 2**16")
    kmax = int(math.log2(horizon))
    k0 = max(0, int(math.log2(seq.start_index)))
    ks = list(range(k0, kmax))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            sums = list(ex.map(lambda k: _block_sum(dist, seq, k, seq.start_index), ks))
    else:
        sums = [_block_sum(dist, seq, k, seq.start_index) for k in ks]
    partial = [float(v) for v in np.cumsum(sums)]

    def done(verdict, index=None, comp=None, method=""):
        return SeriesResult(verdict, index, ks, sums, partial, comp, method)

    if math.isfinite(dist.support_bound):
        return done(CONVERGENT, -math.inf, method="bounded support")
    idx = tail_index(dist, seq)
    if idx < -1.0 - INDEX_BAND:
        return done(CONVERGENT, idx, method="index")
    if idx > -1.0 + INDEX_BAND:
        return done(DIVERGENT, idx, method="index")
    te, se = dist.tail_exponents, seq.exponents()
    if te is None or se is None:
        return done(INCONCLUSIVE, idx, method="index at boundary, no exponents")
    comp = compose_tail(te, se)
    verdict = CONVERGENT if integral_converges(comp) else DIVERGENT
    return done(verdict, idx, comp, method="exponent test at boundary")


@dataclass
class CriterionVerdict:
    moment_side: str
    series_side: str
    moment_diagnostics: dict = field(default_factory=dict)
    series: SeriesResult | None = None

    @property
    def conclusive(self) -> bool:
        return INCONCLUSIVE not in (self.moment_side, self.series_side)

    @property
    def agree(self) -> bool:
        if not self.conclusive:
            return False
        return (self.moment_side == FINITE) == (self.series_side == CONVERGENT)

    def as_dict(self) -> dict:
        s = self.series
        return {
            "moment_side": self.moment_side,
            "series_side": self.series_side,
            "agree": self.agree,
            "moment": _jsonable(self.moment_diagnostics),
            "series": None if s is None else {
                "index": s.index, "method": s.method,
                "composed_exponents": s.composed_exponents,
                "partial_sum": s.partial_sums[-1] if s.partial_sums else 0.0,
            },
        }


def _jsonable(d):
    if isinstance(d, dict):
        return {str(k): _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, (np.floating, np.integer)):
        return d.item()
    return d


def check_monotone_hypotheses(m: MomentSpec, seq: NormalizingSeq) -> dict:
    """Thresholds past which ``x^alpha L^alpha(x)`` and ``x^{1/alpha} Lt(x^{1/alpha})`` increase.

    Both reduce to ``y -> y F(y)`` increasing for F = L and F = Lt.
    """
    out = {}
    for name, F in (("L", m.L), ("Ltilde", seq.Ltilde)):
        try:
            out[name] = monotone_threshold(F, 1.0, "increasing")
        except NotFoundError as exc:
            raise HypothesisError(
                f"x {name}(x) is not increasing at the end of the scanned range: {exc}") from exc
    return out


def moment_series_check(dist: Distribution, m: MomentSpec, seq: NormalizingSeq | None = None,
                        horizon: int = 2**20, workers: int = 1) -> CriterionVerdict:
    """Run both classifiers independently and report whether they agree."""
    if seq is None:
        seq = sequence_from_L(m.alpha, m.L)
    if abs(seq.alpha - m.alpha) > 1e-12:
        raise HypothesisError(f"normalizer alpha={seq.alpha} differs from moment alpha={m.alpha}")
    thresholds = check_monotone_hypotheses(m, seq)
    mr = moment_value(dist, m)
    sr = tail_series_classify(dist, seq, horizon, workers)
    diag = dict(mr.diagnostics, value=mr.value, monotone_from=thresholds)
    return CriterionVerdict(mr.kind, sr.verdict, diag, sr)
