"""Monte Carlo experiments for strong laws and complete convergence at desk scale.

Almost-sure limits cannot be observed at finite n, so every experiment reports
raw curves plus trend diagnostics (decay of medians across dyadic n, stability
of the dyadic series under horizon doubling), labelled as such in the output.
"""

from __future__ import annotations

import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .dependence import IID, DependenceStructure, parse_dependence
from .distributions import Distribution, StPetersburg, parse_distribution
from .errors import ConfigError, ConfigHypothesisError, WeightSchemeError
from .normalizer import NormalizingSeq, sequence_from_L
from .rng import stream
from .svf import SlowVaryFn, geometric_grid, parse, to_text

SCHEMA_VERSION = 1
DEFAULT_GRID = tuple(2**k for k in range(8, 21))
DEFAULT_EPS = (0.5, 1.0, 2.0)
MIN_CI_REPS = 30
TREND_LABEL = "finite-n trend diagnostic; almost-sure limits are not observable"


def resolve_workers(workers: int | None = None) -> int:
    """``None`` reads MZLAW_WORKERS (default 1); 0 means one per CPU."""
    if workers is None:
        workers = int(os.environ.get("MZLAW_WORKERS", "1"))
    if workers < 0:
        raise ConfigError("workers must be >= 0")
    return workers or (os.cpu_count() or 1)


def map_ordered(fn, items, workers: int):
    """``list(map(fn, items))``, possibly on threads; order is always preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


# -- weights -------------------------------------------------------------------

@dataclass(frozen=True)
class WeightScheme:
    """Triangular weights ``a_{ni}``: ``ones``, ``signs`` (random +-1 per row) or ``bounded:c``.

    ``bounded:c`` uses ``a_{ni} = c i / n``.  Every row must satisfy
    ``sum_i a_{ni}^2 <= C n``; C is 1 for ones/signs and ``c^2`` for bounded.
    """

    kind: str = "ones"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ones", "signs", "bounded"):
            raise ConfigError(f"unknown weight scheme {self.kind!r}")
        if self.kind == "bounded" and not self.c > 0:
            raise ConfigError("bounded weights need c > 0")

    @property
    def C(self) -> float:
        return self.c**2 if self.kind == "bounded" else 1.0

    def row(self, n: int, seed: int) -> np.ndarray:
        if self.kind == "ones":
            a = np.ones(n)
        elif self.kind == "signs":
            a = 2.0 * stream(seed, "weights", n).integers(0, 2, n) - 1.0
        else:
            a = self.c * np.arange(1, n + 1) / n
        self.check(a)
        return a

    def check(self, a: np.ndarray) -> None:
        n = a.size
        ss = math.fsum(a * a)
        if ss > self.C * n * (1 + 1e-12):
            raise WeightSchemeError(f"row n={n}: sum a^2 = {ss:g} exceeds C n = {self.C * n:g}")

    def to_text(self) -> str:
        return f"bounded:{self.c!r}" if self.kind == "bounded" else self.kind

    @classmethod
    def from_text(cls, text: str) -> "WeightScheme":
        kind, _, arg = text.strip().partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)


# -- configuration -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dist: Distribution
    alpha: float
    L: SlowVaryFn = field(default_factory=SlowVaryFn)
    dep: DependenceStructure = field(default_factory=IID)
    Ltilde: SlowVaryFn | None = None  # normalizer override (e.g. c:1 for the stripped contrast)
    n_grid: tuple[int, ...] = DEFAULT_GRID
    reps: int = 200
    epsilons: tuple[float, ...] = DEFAULT_EPS
    weights: WeightScheme = field(default_factory=WeightScheme)
    seed: int = 0
    tail_reps: int | None = None  # extra replications for n >= tail_from
    tail_from: int | None = None

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be non-empty and strictly increasing")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.epsilons or min(self.epsilons) <= 0:
            raise ConfigError("epsilons must be a non-empty list of positive numbers")
        if not self.alpha >= 1:
            raise ConfigError("alpha must be >= 1")
        if self.tail_reps is not None and self.tail_reps < self.reps:
            raise ConfigError("tail_reps must be >= reps")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def seq(self) -> NormalizingSeq:
        if self.Ltilde is None:
            return sequence_from_L(self.alpha, self.L)
        return NormalizingSeq(self.alpha, self.Ltilde)

    @property
    def total_reps(self) -> int:
        return self.reps if self.tail_reps is None else self.tail_reps

    def to_dict(self) -> dict:
        return {
            "dist": self.dist.to_text(), "alpha": self.alpha, "L": to_text(self.L),
            "dep": self.dep.to_text(),
            "Ltilde": None if self.Ltilde is None else to_text(self.Ltilde),
            "n_grid": list(self.n_grid), "reps": self.reps, "epsilons": list(self.epsilons),
            "weights": self.weights.to_text(), "seed": self.seed,
            "tail_reps": self.tail_reps, "tail_from": self.tail_from,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            dist=parse_distribution(d["dist"]), alpha=float(d["alpha"]), L=parse(d["L"]),
            dep=parse_dependence(d["dep"]),
            Ltilde=None if d.get("Ltilde") is None else parse(d["Ltilde"]),
            n_grid=tuple(d["n_grid"]), reps=int(d["reps"]), epsilons=tuple(d["epsilons"]),
            weights=WeightScheme.from_text(d["weights"]), seed=int(d["seed"]),
            tail_reps=d.get("tail_reps"), tail_from=d.get("tail_from"),
        )


def check_strong_law_hypotheses(cfg: ExperimentConfig) -> None:
    """With alpha = 1 the moment side needs ``L(x) >= 1`` and nondecreasing,
    unless the normalizer's slowly varying factor tends to infinity."""
    if cfg.alpha != 1.0:
        return
    L = cfg.L
    x = geometric_grid(L.domain_low, 2.0**64)
    lv = L.log_eval(x)
    if np.all(lv >= -1e-12) and np.all(np.diff(lv) >= -1e-12):
        return
    e = cfg.seq.Ltilde.exponents() if hasattr(cfg.seq.Ltilde, "exponents") else None
    if e is not None:
        first = next((v for v in e[1:] if abs(v) > 1e-12), 0.0)
        if e[0] == 0.0 and first > 0:
            return
    raise ConfigHypothesisError(
        "alpha = 1 requires the hypothesis 'L(x) >= 1 and L nondecreasing' "
        f"(violated by L = {to_text(L)} on the scanned range) unless the conjugate "
        "factor of b_n increases to infinity")


# -- results -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


@dataclass
class ExperimentResult:
    kind: str
    config: dict
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r[c]) for c in self.columns) + "\n")
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "config": self.config,
                "seed": self.config.get("seed"), "summary": self.summary}

    def to_json(self) -> str:
        payload = dict(self.summary_dict(), columns=self.columns, rows=self.rows)
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default,
                          allow_nan=True) + "\n"


# -- simulation core -----------------------------------------------------------

def _replicate_maxima(cfg: ExperimentConfig, bn: np.ndarray, rep: int) -> np.ndarray:
    """M_n = max_{k<=n} |sum_{i<=k} a_{ni} X_i| / b_n on the grid, one replication."""
    n_max = cfg.n_grid[-1]
    x = cfg.dep.generate(cfg.dist, n_max, stream(cfg.seed, "sequence", rep))
    out = np.empty(len(cfg.n_grid))
    if cfg.weights.kind == "ones":
        # one pass: prefix maxima serve every n
        pm = np.maximum.accumulate(np.abs(np.cumsum(x)))
        idx = np.asarray(cfg.n_grid) - 1
        return pm[idx] / bn
    for j, n in enumerate(cfg.n_grid):
        a = cfg.weights.row(n, cfg.seed)
        out[j] = np.max(np.abs(np.cumsum(a * x[:n]))) / bn[j]
    return out


def simulate_maxima(cfg: ExperimentConfig, workers: int | None = None) -> np.ndarray:
    """(replications, grid) array of M_n; rows in replication order."""
    seq = cfg.seq
    grid = np.asarray(cfg.n_grid, dtype=np.int64)
    if grid[0] < seq.start_index:
        raise ConfigError(f"n_grid starts below the normalizer's first index {seq.start_index}")
    bn = seq.b(grid)
    if cfg.weights.kind != "ones":
        for n in cfg.n_grid:  # fail before simulating
            cfg.weights.row(n, cfg.seed)
    w = resolve_workers(workers)
    rows = map_ordered(lambda r: _replicate_maxima(cfg, bn, r), range(cfg.total_reps), w)
    return np.vstack(rows)


def _drift(cfg: ExperimentConfig, bn: np.ndarray) -> np.ndarray:
    # shift n E X / b_n a non-centered law would add; diagnostic only
    mu = cfg.dist.mean
    if not math.isfinite(mu):
        return np.full(bn.shape, math.nan)
    return np.asarray(cfg.n_grid, dtype=float) * mu / bn


def _strictly_decreasing(v) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.diff(v) < 0))


def run_slln(cfg: ExperimentConfig, workers: int | None = None,
             maxima: np.ndarray | None = None, check: bool = True) -> ExperimentResult:
    """Median and 90% quantile of M_n across replications at each grid n."""
    if check:
        check_strong_law_hypotheses(cfg)
    M = simulate_maxima(cfg, workers) if maxima is None else maxima
    M = M[: cfg.reps]
    med = np.median(M, axis=0)
    q90 = np.quantile(M, 0.9, axis=0)
    bn = cfg.seq.b(np.asarray(cfg.n_grid, dtype=np.int64))
    drift = _drift(cfg, bn)
    rows = [{"n": n, "b_n": float(b), "median": float(m), "q90": float(q), "drift": float(d)}
            for n, b, m, q, d in zip(cfg.n_grid, bn, med, q90, drift)]
    tail = med[-5:]
    summary = {
        "label": TREND_LABEL,
        "final_median": float(med[-1]),
        "median_decreasing_last5": _strictly_decreasing(tail),
    }
    return ExperimentResult("slln", cfg.to_dict(), ["n", "b_n", "median", "q90", "drift"], rows, summary)


def wilson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def run_complete_convergence(cfg: ExperimentConfig, workers: int | None = None,
                             maxima: np.ndarray | None = None) -> ExperimentResult:
    """Exceedance frequencies ``p_n(eps) = P(M_n > eps)`` and the dyadic series.

    Each dyadic grid point stands for its block ``[2^j, 2^{j+1})``, where
    ``sum 1/n ~ ln 2``, so ``S(eps) = sum_j ln2 * p_{2^j}``.
    """
    M = simulate_maxima(cfg, workers) if maxima is None else maxima
    tail_from = cfg.tail_from if cfg.tail_from is not None else cfg.n_grid[-1] + 1
    cols = ["n"]
    for e in cfg.epsilons:
        cols += [f"p_hat_eps_{e:g}", f"p_lo_eps_{e:g}", f"p_hi_eps_{e:g}"]
    cols += ["block_term", "partial_sum"]
    rows = []
    primary = 1.0 if 1.0 in cfg.epsilons else cfg.epsilons[0]
    partial = 0.0
    for j, n in enumerate(cfg.n_grid):
        use = M[:, j] if n >= tail_from else M[: cfg.reps, j]
        r = {"n": n}
        for e in cfg.epsilons:
            k = int(np.count_nonzero(use > e))
            p = k / use.size
            lo, hi = wilson(k, use.size) if use.size >= MIN_CI_REPS else (math.nan, math.nan)
            r.update({f"p_hat_eps_{e:g}": p, f"p_lo_eps_{e:g}": lo, f"p_hi_eps_{e:g}": hi})
        term = math.log(2.0) * r[f"p_hat_eps_{primary:g}"]
        partial += term
        r["block_term"], r["partial_sum"] = term, partial
        rows.append(r)
    terms = np.array([r["block_term"] for r in rows])
    summary = {
        "label": TREND_LABEL,
        "epsilon": primary,
        "S_hat": partial,
        "block_terms_nonincreasing": bool(np.all(np.diff(terms) <= 0)),
        # divergence indicator: the series' terms stop decaying over the last five blocks
        "divergence_indicator": bool(np.all(np.diff(terms[-5:]) >= 0)),
    }
    return ExperimentResult("complete", cfg.to_dict(), cols, rows, summary)


def merge_results(a: ExperimentResult, b: ExperimentResult) -> ExperimentResult:
    """Side-by-side table of two runs on the same grid (columns of ``b`` appended)."""
    if [r["n"] for r in a.rows] != [r["n"] for r in b.rows]:
        raise ConfigError("results are on different grids")
    extra = [c for c in b.columns if c not in a.columns]
    rows = [dict(ra, **{c: rb[c] for c in extra}) for ra, rb in zip(a.rows, b.rows)]
    return ExperimentResult(f"{a.kind}+{b.kind}", a.config, a.columns + extra, rows,
                            {a.kind: a.summary, b.kind: b.summary})


def dyadic_grid(lo_index: int, n_max: int) -> tuple[int, ...]:
    """Powers of two from the first one >= lo_index up to n_max."""
    k0 = max(0, math.ceil(math.log2(max(lo_index, 1))))
    return tuple(2**k for k in range(k0, int(math.log2(n_max)) + 1))


# -- St. Petersburg ------------------------------------------------------------

def _ll(x):
    return np.log2(np.log2(x))


def petersburg_normalizers(n: np.ndarray, gamma: float):
    """Denominators of the weak-law, strong-law and limsup ratios at n (arrays)."""
    n = np.asarray(n, dtype=float)
    weak = n * np.log2(n)
    strong = weak * _ll(4.0 + n) ** (1.0 + gamma)
    limsup = weak * _ll(4.0 + n) * np.log2(_ll(4.0 + n))
    return weak, strong, limsup


def _petersburg_rep(seed, dep, n_max, grid, gamma, burn_in, rep):
    x = dep.generate(StPetersburg(), n_max, stream(seed, "petersburg", rep))
    s = np.cumsum(x)
    g = np.asarray(grid) - 1
    weak, strong, _ = petersburg_normalizers(np.asarray(grid), gamma)
    m = np.arange(burn_in, n_max + 1)
    _, _, lim = petersburg_normalizers(m, gamma)
    running = np.maximum.accumulate(s[burn_in - 1:] / lim)
    run_at = np.array([running[n - burn_in] if n >= burn_in else math.nan for n in grid])
    return s[g] / weak, s[g] / strong, run_at


def run_petersburg(gamma: float, n_grid=DEFAULT_GRID, reps: int = 200, seed: int = 0,
                   dep: DependenceStructure | None = None, burn_in: int = 2**10,
                   workers: int | None = None) -> ExperimentResult:
    """Three St. Petersburg ratios per n.

    ``weak_median``: median of S_n/(n log n); ``strong_median``: median of
    S_n/(n log n (loglog(4+n))^{1+gamma}); ``running_max``: the largest, over
    replications, of ``max_{burn_in <= m <= n} S_m/(n log n loglog(4+n) logloglog(4+n))``
    (logs base 2).
    """
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    dep = IID() if dep is None else dep
    grid = tuple(int(n) for n in n_grid)
    if grid[0] < 2 or burn_in < 1:
        raise ConfigError("n_grid must start at n >= 2 and burn_in >= 1")
    n_max = grid[-1]
    w = resolve_workers(workers)
    res = map_ordered(lambda r: _petersburg_rep(seed, dep, n_max, grid, gamma, burn_in, r), range(reps), w)
    weak = np.vstack([r[0] for r in res])
    strong = np.vstack([r[1] for r in res])
    run = np.vstack([r[2] for r in res])
    wm, sm = np.median(weak, axis=0), np.median(strong, axis=0)
    rm = np.max(run, axis=0)
    rows = [{"n": n, "weak_median": float(a), "strong_median": float(b), "running_max": float(c)}
            for n, a, b, c in zip(grid, wm, sm, rm)]
    config = {"gamma": gamma, "n_grid": list(grid), "reps": reps, "seed": seed,
              "dep": dep.to_text(), "burn_in": burn_in}
    summary = {"label": TREND_LABEL, "strong_median_decreasing": _strictly_decreasing(sm),
               "running_max_final": float(rm[-1])}
    return ExperimentResult("petersburg", config, ["n", "weak_median", "strong_median", "running_max"],
                            rows, summary)
