"""Command-line entry point: ``mzlaw <subcommand> [options]``.

Every option can also come from a ``key=value`` file given with ``--config``
(keys are option names without the leading dashes); flags on the command line
win.  Exit status: 0 success, 2 parse or configuration error, 3 violated
hypothesis, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conjugate import NumericConjugate, conjugate_symbolic, verify_conjugacy
from .criterion import moment_series_check
from .dependence import generate_sequence, pairwise_nd_test, parse_dependence
from .distributions import MomentSpec, moment_value, parse_distribution
from .errors import (BracketError, ConfigError, DomainError, ExpressionSyntaxError, HypothesisError,
                     NonConvergenceError, NotFoundError, NumericOverflowError, PSDError,
                     StepUnderflowError, WeightSchemeError)
from .harness import (ExperimentConfig, WeightScheme, dyadic_grid, merge_results,
                      run_complete_convergence, run_petersburg, run_slln, simulate_maxima,
                      check_strong_law_hypotheses, resolve_workers, SCHEMA_VERSION)
from .normalizer import karamata_tail_sum, sequence_from_L
from .rng import stream
from .svf import parse, to_text

EXIT_OK, EXIT_PARSE, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 2, 3, 4

_NUMERIC_ERRORS = (BracketError, NonConvergenceError, NumericOverflowError, StepUnderflowError,
                   NotFoundError, DomainError, FloatingPointError, OverflowError)


class _ParseFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ParseFailure(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_expr(text: str) -> int:
    """Integer, also written as ``2^k`` or ``2**k``."""
    t = text.replace("**", "^")
    if "^" in t:
        base, exp = t.split("^")
        return int(base) ** int(exp)
    return int(t)


# -- parser --------------------------------------------------------------------

def _output_opts(p):
    p.add_argument("--out", help="write the table here (atomic); default stdout")
    p.add_argument("--summary", help="write a JSON summary here (atomic)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _experiment_opts(p, petersburg=False):
    if not petersburg:
        p.add_argument("--dist", required=True, help="marginal law, e.g. rademacher, logpareto:1.5,3")
        p.add_argument("--alpha", type=float, required=True)
        p.add_argument("--L", default="c:1", help="slowly varying function of the moment condition")
        p.add_argument("--Ltilde", help="override the conjugate factor of b_n (e.g. c:1)")
        p.add_argument("--eps", type=_floats, default=(0.5, 1.0, 2.0), help="comma-separated epsilons")
        p.add_argument("--weights", default="ones", help="ones | signs | bounded:c")
        p.add_argument("--tail-reps", type=int, help="replications used for n >= --tail-from")
        p.add_argument("--tail-from", type=_int_expr)
        p.add_argument("--n-min", type=_int_expr, help="first grid point (default: first power of two past the start index)")
    else:
        p.add_argument("--gamma", type=float, default=0.1)
        p.add_argument("--burn-in", type=_int_expr, default=2**10)
        p.add_argument("--n-min", type=_int_expr, default=2**10)
    p.add_argument("--dep", default="iid", help="iid | na:RHO[:BLOCK] | swr | pnd[:DELTA,KAPPA]")
    p.add_argument("--n-max", type=_int_expr, default=2**20)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="threads for replications (0 = one per CPU; default $MZLAW_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mzlaw", description="Regular-variation numerics and strong-law experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("conjugate", help="de Bruijn conjugate of L with residual table")
    p.add_argument("--L", required=True)
    p.add_argument("--grid", type=_floats, default=tuple(2.0**k for k in (10, 20, 30, 40)))
    p.add_argument("--tol", type=float, default=0.05)
    _output_opts(p)

    p = sub.add_parser("bn", help="normalizing sequence b_n")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--L", required=True)
    p.add_argument("--n-max", type=_int_expr, required=True)
    p.add_argument("--dyadic", action="store_true", help="only powers of two")
    _output_opts(p)

    p = sub.add_parser("karamata", help="tail sum of L^q(k)/k^p versus its asymptotic")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--L", default="log")
    p.add_argument("--n", type=_int_expr, required=True)
    p.add_argument("--horizon", type=_int_expr)
    _output_opts(p)

    p = sub.add_parser("dist", help="tail table and moment classification")
    p.add_argument("--dist", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--L", default="c:1")
    p.add_argument("--shift", type=float)
    p.add_argument("--log2-max", type=int, default=64, help="tail table up to |x| = 2^this")
    _output_opts(p)

    p = sub.add_parser("sample", help="generate a sequence or test pairwise negative dependence")
    p.add_argument("--dist", required=True)
    p.add_argument("--dep", default="iid")
    p.add_argument("--n", type=_int_expr, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test", choices=("none", "nd"), default="none")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--grid", type=_floats, help="comma-separated thresholds (default marginal quartiles)")
    _output_opts(p)

    p = sub.add_parser("criterion", help="moment condition versus tail series over b_n")
    p.add_argument("--dist", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--L", default="c:1")
    p.add_argument("--shift", type=float)
    p.add_argument("--horizon", type=_int_expr, default=2**20)
    p.add_argument("--workers", type=int)
    _output_opts(p)

    for name, text in (("slln", "strong-law medians of max partial sums over b_n"),
                       ("complete", "exceedance frequencies and the dyadic series")):
        p = sub.add_parser(name, help=text)
        _experiment_opts(p)
        _output_opts(p)
    p = sub.add_parser("petersburg", help="St. Petersburg weak law, strong law and limsup ratios")
    _experiment_opts(p, petersburg=True)
    _output_opts(p)

    for p in sub.choices.values():
        p.add_argument("--config", help="key=value file with default options")
    return ap


# -- configuration round trip -------------------------------------------------

_SKIP = {"subcommand", "config"}
_LOCAL = {"out", "summary", "workers"}


def _value_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_value_text(x) for x in v)
    return str(v)


@dataclass
class CliConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_argv(cls, argv) -> "CliConfig":
        ns = _parse_with_config(list(argv))
        opts = {k: v for k, v in vars(ns).items() if k not in _SKIP}
        return cls(ns.subcommand, opts)

    def to_text(self, echo: bool = False) -> str:
        """key=value text; ``echo=True`` drops output paths and the worker count,
        which do not affect results."""
        lines = [f"subcommand={self.subcommand}"]
        for k in sorted(self.options):
            v = self.options[k]
            if echo and k in _LOCAL:
                continue
            if v is not None:
                lines.append(f"{k.replace('_', '-')}={_value_text(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CliConfig":
        pairs = _read_pairs(text)
        sub = pairs.pop("subcommand", None)
        if sub is None:
            raise _ParseFailure("config text lacks subcommand=")
        return cls.from_argv([sub] + _pairs_to_argv(pairs))


def _read_pairs(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _ParseFailure(f"config line without '=': {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _pairs_to_argv(pairs: dict) -> list[str]:
    argv = []
    for k, v in pairs.items():
        flag = "--" + k.replace("_", "-")
        if v in ("true", "false"):
            if v == "true":
                argv.append(flag)
            continue
        argv += [flag, v]
    return argv


def _split_config(argv):
    """Pull ``--config PATH`` (or ``--config=PATH``) out of argv."""
    rest, path, it = [], None, iter(argv)
    for a in it:
        if a == "--config":
            path = next(it, None)
            if path is None:
                raise _ParseFailure("--config needs a path")
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            rest.append(a)
    return path, rest


def _parse_with_config(argv):
    parser = build_parser()
    path, rest = _split_config(argv)
    if path is None:
        return parser.parse_args(argv)
    # the subcommand is the first token that is not an option
    sub = next((a for a in rest if not a.startswith("-")), None)
    with open(path, encoding="utf-8") as fh:
        pairs = _read_pairs(fh.read())
    file_sub = pairs.pop("subcommand", sub)
    if sub is None or file_sub != sub:
        raise _ParseFailure(f"config file is for {file_sub!r}, not {sub!r}")
    # file options first, so explicit flags override them
    i = rest.index(sub)
    ns = parser.parse_args(rest[: i + 1] + _pairs_to_argv(pairs) + rest[i + 1:])
    ns.config = path
    return ns


# -- output --------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".mzlaw-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return v


def _json(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def _emit(args, table_text: str, json_obj: dict, summary: dict | None = None):
    text = _json(json_obj) if args.format == "json" else table_text
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.summary:
        atomic_write(args.summary, _json(summary if summary is not None else json_obj))


def _envelope(cfg: CliConfig, **payload) -> dict:
    return dict(schema_version=SCHEMA_VERSION, subcommand=cfg.subcommand,
                config=cfg.to_text(echo=True), **payload)


# -- subcommands ---------------------------------------------------------------

def cmd_conjugate(args, cfg):
    L = parse(args.L)
    grid = np.asarray(args.grid, dtype=float)
    sym = conjugate_symbolic(L)
    num = NumericConjugate(L)
    nrep = verify_conjugacy(L, num, grid, args.tol)
    cols = ["x", "ltilde_numeric", "dev1_numeric", "dev2_numeric"]
    rows = [{"x": float(x), "ltilde_numeric": float(num(x)), "dev1_numeric": float(a),
             "dev2_numeric": float(b)} for x, a, b in zip(grid, nrep.dev1, nrep.dev2)]
    if sym is not None:
        srep = verify_conjugacy(L, sym, grid, args.tol)
        for r, a, b in zip(rows, srep.dev1, srep.dev2):
            r.update(ltilde=float(sym(r["x"])), dev1=float(a), dev2=float(b))
        cols = ["x", "ltilde", "dev1", "dev2"] + cols[1:]
    else:
        # without a symbolic rule the numeric conjugate is the conjugate
        for r in rows:
            r.update(ltilde=r["ltilde_numeric"], dev1=r["dev1_numeric"], dev2=r["dev2_numeric"])
        cols = ["x", "ltilde", "dev1", "dev2"] + cols[1:]
    sym_text = "none" if sym is None else to_text(sym)
    table = f"# symbolic_conjugate={sym_text}\n" + _csv(cols, rows)
    obj = _envelope(cfg, L=to_text(L), symbolic_conjugate=None if sym is None else sym_text,
                    rows=rows, passed=bool(rows[-1]["dev1"] <= args.tol and rows[-1]["dev2"] <= args.tol),
                    numeric_passed=nrep.passed)
    _emit(args, table, obj)


def cmd_bn(args, cfg):
    seq = sequence_from_L(args.alpha, parse(args.L))
    if args.dyadic:
        n = np.array(dyadic_grid(seq.start_index, args.n_max), dtype=np.int64)
    else:
        n = np.arange(seq.start_index, args.n_max + 1, dtype=np.int64)
    b = seq.b(n)
    rows = [{"n": int(k), "b_n": float(v)} for k, v in zip(n, b)]
    _emit(args, _csv(["n", "b_n"], rows), _envelope(cfg, Ltilde=str(seq.Ltilde), rows=rows))


def cmd_karamata(args, cfg):
    r = karamata_tail_sum(args.p, args.q, parse(args.L), args.n, args.horizon)
    row = {"p": r.p, "q": r.q, "n": r.n, "numericSum": r.numeric_sum,
           "asymptotic": r.asymptotic, "ratio": r.ratio}
    _emit(args, _csv(list(row), [row]), _envelope(cfg, **row))


def cmd_dist(args, cfg):
    d = parse_distribution(args.dist)
    L = parse(args.L)
    mr = moment_value(d, MomentSpec(args.alpha, L, args.shift))
    k = np.arange(0, args.log2_max + 1)
    lt = d.log_tail(k * math.log(2.0))
    rows = [{"x": float(2.0**j), "log_tail": float(v), "tail_prob": float(math.exp(v))} for j, v in zip(k, lt)]
    moment = {"kind": mr.kind, "value": mr.value, "diagnostics": mr.diagnostics}
    _emit(args, _csv(["x", "log_tail", "tail_prob"], rows),
          _envelope(cfg, dist=d.to_text(), moment=moment, tail=rows),
          _envelope(cfg, dist=d.to_text(), moment=moment))


def cmd_sample(args, cfg):
    d = parse_distribution(args.dist)
    dep = parse_dependence(args.dep)
    if args.test == "nd":
        grid = args.grid or tuple(float(v) for v in d.ppf(np.array([0.25, 0.5, 0.75])))
        rep = pairwise_nd_test(dep, d, grid, grid, args.reps, stream(args.seed, "nd"), n=args.n)
        obj = _envelope(cfg, report=rep.as_dict())
        row = rep.as_dict()
        row["worst_point"] = " ".join(str(v) for v in row["worst_point"])
        _emit(args, _csv(list(row), [row]), obj)
        if not rep.passed:
            print(f"mzlaw: pairwise negative dependence rejected at {row['worst_point']}", file=sys.stderr)
            return EXIT_HYPOTHESIS
        return EXIT_OK
    x = generate_sequence(dep, d, args.n, stream(args.seed, "sample"))
    rows = [{"i": i + 1, "x": float(v)} for i, v in enumerate(x)]
    _emit(args, _csv(["i", "x"], rows), _envelope(cfg, values=[r["x"] for r in rows]))
    return EXIT_OK


def cmd_criterion(args, cfg):
    d = parse_distribution(args.dist)
    m = MomentSpec(args.alpha, parse(args.L), args.shift)
    v = moment_series_check(d, m, horizon=args.horizon, workers=_workers(args))
    obj = _envelope(cfg, verdict=v.as_dict())
    # table: partial sums; the verdict goes to the summary (and to stdout with --format json)
    _emit(args, v.series.to_csv(), obj, obj)


def _workers(args):
    return resolve_workers(args.workers)


def _experiment_config(args) -> ExperimentConfig:
    alpha = args.alpha
    L = parse(args.L)
    Lt = parse(args.Ltilde) if args.Ltilde else None
    probe = ExperimentConfig(parse_distribution(args.dist), alpha, L, Ltilde=Lt, n_grid=(1 << 40,))
    start = probe.seq.start_index if args.n_min is None else args.n_min
    grid = dyadic_grid(start, args.n_max)
    if not grid:
        raise ConfigError(f"no dyadic grid point between {start} and {args.n_max}")
    return ExperimentConfig(
        dist=probe.dist, alpha=alpha, L=L, dep=parse_dependence(args.dep), Ltilde=Lt,
        n_grid=grid, reps=args.reps, epsilons=args.eps, weights=WeightScheme.from_text(args.weights),
        seed=args.seed, tail_reps=args.tail_reps, tail_from=args.tail_from)


def cmd_experiment(args, cfg):
    ec = _experiment_config(args)
    if args.subcommand == "slln":
        check_strong_law_hypotheses(ec)
    M = simulate_maxima(ec, _workers(args))
    # the complete-convergence statement carries no alpha = 1 restriction on L
    slln = run_slln(ec, maxima=M, check=args.subcommand == "slln")
    res = merge_results(slln, run_complete_convergence(ec, maxima=M))
    summary = dict(res.summary_dict(), cli_config=cfg.to_text(echo=True))
    _emit(args, res.to_csv(), dict(summary, columns=res.columns, rows=res.rows), summary)


def cmd_petersburg(args, cfg):
    grid = dyadic_grid(args.n_min, args.n_max)
    res = run_petersburg(args.gamma, grid, args.reps, args.seed, parse_dependence(args.dep),
                         args.burn_in, _workers(args))
    summary = dict(res.summary_dict(), cli_config=cfg.to_text(echo=True))
    _emit(args, res.to_csv(), dict(summary, columns=res.columns, rows=res.rows), summary)


COMMANDS = {
    "conjugate": cmd_conjugate, "bn": cmd_bn, "karamata": cmd_karamata, "dist": cmd_dist,
    "sample": cmd_sample, "criterion": cmd_criterion, "slln": cmd_experiment,
    "complete": cmd_experiment, "petersburg": cmd_petersburg,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = _parse_with_config(argv)
        cfg = CliConfig(ns.subcommand, {k: v for k, v in vars(ns).items() if k not in _SKIP})
        status = COMMANDS[ns.subcommand](ns, cfg)
        return EXIT_OK if status is None else status
    except _ParseFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PARSE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (HypothesisError, WeightSchemeError, PSDError) as exc:
        print(f"mzlaw: hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except _NUMERIC_ERRORS as exc:
        print(f"mzlaw: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ExpressionSyntaxError, ConfigError, ValueError, OSError) as exc:
        print(f"mzlaw: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
