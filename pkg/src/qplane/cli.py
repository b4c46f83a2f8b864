"""Command-line front end (``qplane``).

Exit codes: 0 pass, 1 verification failure, 2 usage or parse error, 3 I/O error.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Keys: n, q, N, M, d, samples, tol, seed, sweep, suites, builder,
symbol_pairs, star_terms, out. Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from . import qalgebra, qcstar, qrep
from ._lexer import ParseError
from .opkernel import write_matrix_market

SCHEMA = "qplane.report/1"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    n: int = 2
    q: str = "1/2"
    N: int = 8
    M: int = 8
    d: int = 3
    samples: tuple = (0.6, 0.9, 1.0)
    tol: float = 1e-10
    seed: int = 0
    sweep: tuple = (4, 6, 8, 10)
    suites: tuple = ("algebra", "rep", "symbol")
    builder: str = "lattice"
    symbol_pairs: int = 20
    star_terms: int = 5
    out: str = ""

    @property
    def q_value(self) -> float:
        return float(Fraction(self.q))

    def validate(self):
        try:
            qv = Fraction(self.q)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"q must be a rational string such as 1/2, got {self.q!r}") from None
        if not 0 < qv < 1:
            raise UsageError(f"q must lie in (0, 1), got {self.q}")
        if self.n < 1:
            raise UsageError("n must be >= 1")
        if self.builder not in ("lattice", "abstract"):
            raise UsageError("builder must be 'lattice' or 'abstract'")
        unknown = set(self.suites) - {"algebra", "rep", "symbol"}
        if unknown:
            raise UsageError(f"unknown suites: {sorted(unknown)}")
        if not [a for a in self.samples if float(qv) < a <= 1.0]:
            raise UsageError(f"no fiber samples in (q, 1] = ({self.q}, 1]")
        try:
            self.truncation()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if list(self.sweep) != sorted(self.sweep):
            raise UsageError("sweep must be increasing")
        return self

    def truncation(self, size=None):
        N = M = size
        return qrep.TruncationSpec(self.n, self.q_value, N or self.N, M or self.M, self.d)

    def fiber(self):
        # samples outside (q, 1] are dropped, not rejected
        return qrep.FiberSpectrum.filtered(self.samples, self.q_value)

    def measure(self):
        return qrep.MeasureSpec(self.fiber().samples)

    def as_dict(self):
        out = asdict(self)
        out.pop("out")
        return out


_LIST_INT = {"sweep"}
_LIST_FLOAT = {"samples"}
_LIST_STR = {"suites"}


def _convert(key, value):
    ftypes = {f.name: f.type for f in fields(RunConfig)}
    if key not in ftypes:
        raise UsageError(f"unknown config key {key!r}")
    if isinstance(value, str):
        value = value.strip()
        items = [v for v in value.replace(",", " ").split() if v]
        try:
            if key in _LIST_INT:
                return tuple(int(v) for v in items)
            if key in _LIST_FLOAT:
                return tuple(float(Fraction(v)) for v in items)
            if key in _LIST_STR:
                return tuple(items)
            if key in ("n", "N", "M", "d", "seed", "symbol_pairs", "star_terms"):
                return int(value)
            if key == "tol":
                return float(value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    return value


def load_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key = key.strip()
            out[key] = _convert(key, value)
    return out


def build_config(args, clamp_margin=False) -> RunConfig:
    """File values first, then flags. ``clamp_margin`` caps d at min(N, M) - 1
    for commands that never look at interior rows."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _convert(f.name, v)
    cfg = RunConfig(**values)
    if clamp_margin:
        cfg.d = max(0, min(cfg.d, cfg.N - 1, cfg.M - 1))
    return cfg.validate()


# --------------------------------------------------------------------------
# reports


def _emit(lines, out_path):
    text = "".join(line + "\n" for line in lines)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _header(command, cfg):
    return json.dumps({"schema": SCHEMA, "command": command, "config": cfg.as_dict()}, sort_keys=True)


def _sorted_lines(records):
    keyed = sorted(records, key=lambda r: (r.get("suite", ""), str(r.get("component", "")), r.get("name", "")))
    return [json.dumps(r, sort_keys=True) for r in keyed]


# --------------------------------------------------------------------------
# suites


def algebra_records(cfg):
    recs = []
    for name, lhs, rhs in qalgebra.identity_suite(cfg.n, 3):
        ok, residual = qalgebra.verify_identity(lhs, rhs)
        recs.append(
            dict(suite="algebra", component="", name=name, residual=0.0 if ok else str(residual), passed=ok)
        )
    return recs


def _components(cfg, builder=None):
    trunc = cfg.truncation()
    builder = builder or cfg.builder
    if builder == "abstract":
        return [qrep.build_component_abstract(k, trunc, cfg.fiber()) for k in range(cfg.n + 1)]
    return [qrep.build_component_lattice(k, trunc, cfg.measure()) for k in range(cfg.n + 1)]


def rep_records(cfg):
    recs = []
    reps = _components(cfg)
    for rep in reps:
        report = qrep.verify_relations(rep, cfg.tol)
        for r in report.records:
            recs.append(
                dict(
                    suite="rep",
                    component=rep.label,
                    name=r["relation"],
                    residual=float(r["max_residual"]),
                    interior_size=r["interior_size"],
                    passed=r["max_residual"] <= cfg.tol,
                )
            )
        for j in range(1, rep.k):
            res = qrep.w_relation_residual(rep, j)
            recs.append(dict(suite="rep", component=rep.label, name=f"w[{j}]", residual=float(res), passed=res <= cfg.tol))
    return recs


def symbol_records(cfg):
    recs = []
    rng = random.Random(cfg.seed)
    reps = _components(cfg, "lattice")
    top = reps[-1]
    worst = 0.0
    for _ in range(cfg.symbol_pairs):
        x = qcstar.random_symbol(rng, cfg.n)
        y = qcstar.random_symbol(rng, cfg.n)
        worst = max(worst, qcstar.symbol_vs_matrix(x, y, top))
    recs.append(
        dict(suite="symbol", component=top.label, name=f"product[{cfg.symbol_pairs} pairs]", residual=worst, passed=worst <= cfg.tol)
    )
    worst = 0.0
    for _ in range(cfg.star_terms):
        t = qcstar.random_generator_term(rng, cfg.n)
        A = qcstar.represent(t, reps)
        B = qcstar.represent(qcstar.term_star(t), reps)
        worst = max(worst, (B - A.adjoint()).max_abs())
    recs.append(
        dict(suite="symbol", component="sum", name=f"star[{cfg.star_terms} terms]", residual=worst, passed=worst <= 1e-12)
    )
    return recs


_SUITES = {"algebra": algebra_records, "rep": rep_records, "symbol": symbol_records}


def run_verify(cfg):
    """(lines, passed) for the configured verification suites."""
    recs = []
    for name in sorted(cfg.suites):
        recs.extend(_SUITES[name](cfg))
    failures = sum(1 for r in recs if not r["passed"])
    lines = [_header("verify", cfg)] + _sorted_lines(recs)
    lines.append(json.dumps({"summary": True, "checks": len(recs), "failures": failures, "passed": failures == 0}, sort_keys=True))
    return lines, failures == 0


# --------------------------------------------------------------------------
# commands


def cmd_normalize(args):
    try:
        p = qalgebra.parse_expr(args.expr, args.n)
    except ParseError as exc:
        print(f"parse error at position {exc.pos}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(qalgebra.normal_form(p, args.strategy))
    return EXIT_OK


def cmd_verify(args):
    cfg = build_config(args)
    lines, ok = run_verify(cfg)
    _emit(lines, cfg.out)
    print("PASS" if ok else "FAIL", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_rep_build(args):
    cfg = build_config(args, clamp_margin=True)
    recs = []
    for rep in _components(cfg):
        recs.append(
            {
                "component": rep.label,
                "builder": rep.builder,
                "dim": rep.dim,
                "interior_size": int(rep.interior_mask().sum()),
                "nnz": {f"z{j}": rep.z(j).nnz for j in range(1, cfg.n + 1)},
            }
        )
    _emit([_header("rep-build", cfg)] + [json.dumps(r, sort_keys=True) for r in recs], cfg.out)
    return EXIT_OK


def _parse_what(what, n):
    """'z2' -> ('z', 2); 'gen:<id>' -> ('gen', id)."""
    if what.startswith("gen:"):
        return "gen", what[4:]
    head, digits = what[:1], what[1:]
    if head in ("z", "Q", "S", "w") and digits.isdigit() and 1 <= int(digits) <= n:
        return head, int(digits)
    raise UsageError(f"unknown operator {what!r}; expected z<j>, Q<j>, S<j>, w<j> (1 <= j <= {n}) or gen:<id>")


def cmd_export(args):
    cfg = build_config(args, clamp_margin=True)
    kind, which = _parse_what(args.what, cfg.n)
    reps = _components(cfg)
    if args.k is not None:
        if not 0 <= args.k <= cfg.n:
            raise UsageError(f"component k must lie in 0..{cfg.n}")
        reps = [reps[args.k]]
    term = None
    if kind == "gen":
        if not args.terms:
            raise UsageError("gen:<id> needs --terms FILE")
        terms = {t.term_id: t for t in qcstar.read_terms(args.terms, cfg.n)}
        if which not in terms:
            raise UsageError(f"no term with id {which!r} in {args.terms}")
        term = terms[which]
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    written = []
    for rep in reps:
        if kind == "z":
            op = rep.z(which)
        elif kind == "S":
            op = rep.S(which)
        elif kind == "Q":
            op = qrep.Q_operator(rep, which)
        elif kind == "w":
            if not which < rep.k:
                if args.k is not None:
                    raise UsageError(f"w{which} is undefined on component k={rep.k}")
                continue
            op = qrep.w_operator(rep, which)
        else:
            op = qcstar.pi_k(term, rep)
        name = f"{args.what.replace(':', '-')}_k{rep.k}.mtx"
        path = os.path.join(outdir, name)
        write_matrix_market(op, path, comment=f"{args.what} on component k={rep.k}, n={cfg.n}, q={cfg.q}")
        written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_norm(args):
    cfg = build_config(args)
    terms = qcstar.read_terms(args.terms, cfg.n)
    if not terms:
        raise UsageError(f"no terms in {args.terms}")
    sweep = [cfg.truncation(s) for s in cfg.sweep]
    spectrum = cfg.measure() if cfg.builder == "lattice" else cfg.fiber()
    lines = [_header("norm", cfg)]
    for t in terms:
        rows = qcstar.norm_estimate([t], spectrum, sweep, builder=cfg.builder, seed=cfg.seed)
        lines.extend(qcstar.norm_report_lines(rows, t.term_id))
    _emit(lines, cfg.out)
    return EXIT_OK


def cmd_separate(args):
    cfg = build_config(args)
    if cfg.n > 3:
        raise UsageError("the separation family lives on C^3; n must be <= 3")
    family = qcstar.separation_family(3)
    rep = qcstar.classical_separation(qcstar.random_point_pairs(args.pairs, cfg.n, cfg.seed), family)
    zero = qcstar.classical_separation(qcstar.zero_phase_pairs(args.zero_pairs, cfg.n, cfg.seed), family)
    ok = rep.all_separated and len(zero.unseparated) == zero.pairs_checked
    lines = [
        _header("separate", cfg),
        json.dumps(
            {
                "name": "random_pairs",
                "pairs": rep.pairs_checked,
                "unseparated": rep.unseparated,
                "min_max_difference": min(rep.max_differences, default=0.0),
            },
            sort_keys=True,
        ),
        json.dumps(
            {"name": "zero_phase_pairs", "pairs": zero.pairs_checked, "indistinguishable": len(zero.unseparated)},
            sort_keys=True,
        ),
        json.dumps({"summary": True, "passed": ok}, sort_keys=True),
    ]
    _emit(lines, cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_confluence(args):
    cfg = build_config(args)
    rep = qalgebra.check_local_confluence(cfg.n, args.max_len, seed=cfg.seed)
    lines = [
        _header("confluence", cfg),
        json.dumps(
            {
                "n": rep.n,
                "max_len": rep.max_len,
                "words_checked": rep.words_checked,
                "exhaustive": rep.exhaustive,
                "divergent": [list(d) for d in rep.divergent],
                "passed": rep.confluent,
            },
            sort_keys=True,
        ),
    ]
    _emit(lines, cfg.out)
    return EXIT_OK if rep.confluent else EXIT_FAIL


# --------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--n", type=int)
    p.add_argument("--q", help="rational, e.g. 1/2")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--M", type=int, dest="M")
    p.add_argument("--d", type=int)
    p.add_argument("--samples", help="comma-separated fiber samples in (q, 1]")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sweep", help="comma-separated truncation sizes")
    p.add_argument("--suites", help="comma-separated subset of algebra,rep,symbol")
    p.add_argument("--builder", choices=["lattice", "abstract"])
    p.add_argument("--symbol-pairs", type=int, dest="symbol_pairs")
    p.add_argument("--star-terms", type=int, dest="star_terms")
    p.add_argument("--out", help="report path (default stdout)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def make_parser():
    parser = _Parser(prog="qplane", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("normalize", help="print the normal form of a polynomial in z1..zn, z1#..zn#, q")
    p.add_argument("expr")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--strategy", choices=["leftmost", "rightmost"], default="leftmost")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("verify", help="run the symbolic and numerical verification suites")
    _add_config_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rep-build", help="build all components and summarize them")
    _add_config_flags(p)
    p.set_defaults(func=cmd_rep_build)

    p = sub.add_parser("export", help="write operators as Matrix Market files")
    _add_config_flags(p)
    p.add_argument("what", help="z<j>, Q<j>, S<j>, w<j> or gen:<term id>")
    p.add_argument("--k", type=int, help="single component (default: all)")
    p.add_argument("--terms", help="generator term file (for gen:<id>)")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("norm", help="operator-norm lower bounds of generator terms along a sweep")
    _add_config_flags(p)
    p.add_argument("--terms", required=True)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("separate", help="classical point-separation check of the fixed family")
    _add_config_flags(p)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--zero-pairs", type=int, default=100, dest="zero_pairs")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("confluence", help="local confluence probe of the rewriting system")
    _add_config_flags(p)
    p.add_argument("--max-len", type=int, default=4, dest="max_len")
    p.set_defaults(func=cmd_confluence)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, qcstar.VanishingConditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
