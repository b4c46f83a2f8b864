"""Generator calculus for C0 functions on the quantum complex plane.

``FunctionExpr`` is a canonical expanded form: a finite sum of monomials with
exact ``LaurentQ`` coefficients, each monomial a product of coordinate
powers t_j^p and atoms (point indicators [t_j = q^{-m}], tail indicators
[t_j in {q^{-m} : m >= lo}], sqrt(max(., 0)) and exp(.)). Scaling a
coordinate, t_j -> q^a t_j, stays inside the type, which is what makes the
crossed-symbol reduction

    S_j g(.., t_j, ..) = g(.., q t_j, ..) S_j,
    S_j* S_j = 1,   S_j S_j* = 1 - [t_j = q^{-1}]  (j < n),   S_n unitary

exact and canonical.
"""

from __future__ import annotations

import functools
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._lexer import ParseError, TokenStream
from .opkernel import SparseOperator, block_diag, operator_norm_lb
from .qalgebra import LaurentQ
from .qrep import (
    FiberSpectrum,
    MeasureSpec,
    RepComponent,
    TruncationSpec,
    build_component_abstract,
    build_component_lattice,
    in_Iq,
)

__all__ = [
    "FunctionExpr",
    "GeneratorTerm",
    "CrossedSymbol",
    "VanishingConditionError",
    "parse_function",
    "pi_k",
    "represent",
    "term_star",
    "check_vanishing",
    "spot_check_decay",
    "symbol_multiply",
    "symbol_star",
    "symbol_operator",
    "symbol_vs_matrix",
    "norm_estimate",
    "classical_separation",
    "classical_value",
    "SeparationReport",
    "random_symbol",
    "random_generator_term",
    "random_point_pairs",
    "zero_phase_pairs",
    "norm_report_lines",
    "separation_family",
    "read_terms",
    "parse_term_line",
]

_CHI_RTOL = 1e-9


class VanishingConditionError(ValueError):
    """A term with l_j != 0 whose function does not vanish on {r_j = 0}."""


# --------------------------------------------------------------------------
# atoms


@dataclass(frozen=True)
class _Coord:
    j: int

    def key(self):
        return (0, self.j, 0, "")

    def __str__(self):
        return f"r{self.j}"


@dataclass(frozen=True)
class _ChiPoint:
    j: int
    m: int

    def key(self):
        return (1, self.j, self.m, "")

    def __str__(self):
        return f"chi({self.m},{self.j})"


@dataclass(frozen=True)
class _ChiTail:
    j: int
    lo: int

    def key(self):
        return (2, self.j, self.lo, "")

    def __str__(self):
        return f"chiI({self.j})" if self.lo == 1 else f"chiI({self.j},{self.lo})"


@dataclass(frozen=True)
class _Sqrt:
    arg: "FunctionExpr"

    def key(self):
        return (3, 0, 0, str(self.arg))

    def __str__(self):
        return f"sqrt({self.arg})"


@dataclass(frozen=True)
class _Exp:
    arg: "FunctionExpr"

    def key(self):
        return (4, 0, 0, str(self.arg))

    def __str__(self):
        return f"exp({self.arg})"


def _mono_key(mono):
    return tuple((f.key(), p) for f, p in mono)


def _simplify_monomial(powers):
    """Canonical monomial (sorted (atom, power) tuple) or None if it is identically 0."""
    points, tails, exps, rest = {}, {}, [], {}
    for f, p in powers.items():
        if p == 0:
            continue
        if isinstance(f, _ChiPoint):
            points.setdefault(f.j, set()).add(f.m)
        elif isinstance(f, _ChiTail):
            tails[f.j] = max(tails.get(f.j, f.lo), f.lo)
        elif isinstance(f, _Exp):
            exps.append(f.arg * p)
        else:
            rest[f] = p
    out = dict(rest)
    for j, ms in points.items():
        if len(ms) > 1:
            return None
        (m,) = ms
        if j in tails:
            if m < tails.pop(j):
                return None
        out[_ChiPoint(j, m)] = 1
    for j, lo in tails.items():
        out[_ChiTail(j, lo)] = 1
    if exps:
        arg = exps[0]
        for e in exps[1:]:
            arg = arg + e
        if not arg.is_zero():
            out[_Exp(arg)] = 1
    return tuple(sorted(out.items(), key=lambda fp: fp[0].key()))


class FunctionExpr:
    """Real function of coordinates (r_1..r_n or t_1..t_n) in canonical expanded form."""

    __slots__ = ("_terms", "_str", "_hash")

    def __init__(self, terms=None):
        acc = {}
        for mono, c in (terms or {}).items():
            c = LaurentQ.coerce(c)
            acc[mono] = acc[mono] + c if mono in acc else c
        items = [(m, c) for m, c in acc.items() if not c.is_zero()]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        self._terms = tuple(items)
        self._str = None
        self._hash = None

    # constructors
    @classmethod
    def const(cls, c):
        if isinstance(c, float):
            c = Fraction(str(c))
        return cls({(): LaurentQ.coerce(c)})

    @classmethod
    def q_power(cls, e):
        return cls({(): LaurentQ.q_power(e)})

    @classmethod
    def _atom(cls, atom, power=1):
        mono = _simplify_monomial({atom: power})
        return cls() if mono is None else cls({mono: LaurentQ.const(1)})

    @classmethod
    def coord(cls, j):
        return cls._atom(_Coord(j))

    @classmethod
    def chi_point(cls, m, j):
        """[r_j = q^{-m}]"""
        return cls._atom(_ChiPoint(j, m))

    @classmethod
    def chi_Iq(cls, j, lo=1):
        """[r_j in {q^{-m} : m >= lo}]; lo = 1 is the indicator of I_q."""
        return cls._atom(_ChiTail(j, lo))

    def sqrt(self):
        if self.is_zero():
            return self
        return FunctionExpr._atom(_Sqrt(self))

    def exp(self):
        if self.is_zero():
            return FunctionExpr.const(1)
        return FunctionExpr._atom(_Exp(self))

    # basics
    def items(self):
        return self._terms

    def is_zero(self):
        return not self._terms

    def is_constant(self):
        return all(m == () for m, _ in self._terms)

    def __eq__(self, other):
        if not isinstance(other, FunctionExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._terms)
        return self._hash

    @staticmethod
    def _coerce(x):
        if isinstance(x, FunctionExpr):
            return x
        if isinstance(x, (int, Fraction, float, LaurentQ)):
            return FunctionExpr({(): LaurentQ.coerce(Fraction(str(x)) if isinstance(x, float) else x)})
        return NotImplemented

    def __add__(self, other):
        other = FunctionExpr._coerce(other)
        if other is NotImplemented:
            return other
        return FunctionExpr(_merge(self._terms, other._terms))

    __radd__ = __add__

    def __neg__(self):
        return FunctionExpr({m: -c for m, c in self._terms})

    def __sub__(self, other):
        other = FunctionExpr._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return FunctionExpr._coerce(other) - self

    def __mul__(self, other):
        other = FunctionExpr._coerce(other)
        if other is NotImplemented:
            return other
        acc = {}
        for m1, c1 in self._terms:
            for m2, c2 in other._terms:
                powers = dict(m1)
                for f, p in m2:
                    powers[f] = powers.get(f, 0) + p
                mono = _simplify_monomial(powers)
                if mono is None:
                    continue
                c = c1 * c2
                acc[mono] = acc[mono] + c if mono in acc else c
        return FunctionExpr(acc)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0:
            if len(self._terms) == 1 and self._terms[0][0] == ():
                return FunctionExpr({(): self._terms[0][1] ** k})
            raise ValueError("negative power of a non-constant function")
        out = FunctionExpr.const(1)
        for _ in range(k):
            out = out * self
        return out

    # scaling t_j -> q^a t_j
    def scale(self, shifts):
        """Substitute t_j -> q^{a_j} t_j for the (j -> a_j) pairs in ``shifts``."""
        shifts = {j: a for j, a in dict(shifts).items() if a}
        if not shifts or self.is_zero():
            return self
        acc = FunctionExpr()
        for mono, c in self._terms:
            term = FunctionExpr({(): c})
            for f, p in mono:
                term = term * (_scale_atom(f, shifts) ** p)
            acc = acc + term
        return acc

    def coordinates(self):
        out = set()
        for mono, _ in self._terms:
            for f, _ in mono:
                if isinstance(f, (_Sqrt, _Exp)):
                    out |= f.arg.coordinates()
                else:
                    out.add(f.j)
        return out

    # numerics
    def evaluate(self, x, q):
        """Values at points ``x`` (shape (npts, n), coordinate j in column j-1)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for mono, c in self._terms:
            v = np.full(x.shape[0], c.evaluate(q))
            for f, p in mono:
                v = v * _eval_atom(f, x, q) ** p
            out += v
        return out

    def __call__(self, x, q):
        return self.evaluate(x, q)

    def __str__(self):
        if self._str is None:
            self._str = _format_expr(self._terms)
        return self._str

    def __repr__(self):
        return f"FunctionExpr({str(self)!r})"


def _merge(a, b):
    acc = dict(a)
    for m, c in b:
        acc[m] = acc[m] + c if m in acc else c
    return acc


def _scale_atom(f, shifts):
    if isinstance(f, _Coord):
        a = shifts.get(f.j, 0)
        return FunctionExpr({((f, 1),): LaurentQ.q_power(a)})
    if isinstance(f, _ChiPoint):
        return FunctionExpr.chi_point(f.m + shifts.get(f.j, 0), f.j)
    if isinstance(f, _ChiTail):
        return FunctionExpr.chi_Iq(f.j, f.lo + shifts.get(f.j, 0))
    if isinstance(f, _Sqrt):
        return f.arg.scale(shifts).sqrt()
    return f.arg.scale(shifts).exp()


def _eval_atom(f, x, q):
    if isinstance(f, _Coord):
        return x[:, f.j - 1]
    if isinstance(f, _ChiPoint):
        t = x[:, f.j - 1]
        target = q ** (-f.m)
        return (np.abs(t - target) <= _CHI_RTOL * target).astype(float)
    if isinstance(f, _ChiTail):
        t = x[:, f.j - 1]
        # {q^{-m} : m >= lo} = q^{-(lo-1)} * I_q
        return in_Iq(t * q ** (f.lo - 1), q)
    if isinstance(f, _Sqrt):
        return np.sqrt(np.maximum(f.arg.evaluate(x, q), 0.0))
    with np.errstate(over="ignore"):
        return np.exp(f.arg.evaluate(x, q))


def _format_expr(terms):
    if not terms:
        return "0"
    parts = []
    for mono, c in terms:
        neg = c.items()[0][1] < 0
        if neg:
            c = -c
        factors = [f"{a}" if p == 1 else f"{a}^{p}" for a, p in mono]
        if c != LaurentQ.const(1) or not factors:
            ctext = str(c) if c.is_monomial() else f"({c})"
            factors.insert(0, ctext)
        parts.append(("-" if neg else "+", "*".join(factors)))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for s, body in parts[1:]:
        out += f" {s} {body}"
    return out


# --------------------------------------------------------------------------
# parsing of function strings


def parse_function(text: str, n: int) -> FunctionExpr:
    """Parse e.g. ``"r1*exp(-(r1+r2))"``, ``"chi(1,2)"``, ``"chiI(1)*sqrt(r1^2-1)"``.

    Grammar::

        expr   := ["+"|"-"] term {("+"|"-") term}
        term   := factor {("*"|"/") factor}        division by constants only
        factor := "-" factor | atom ["^" ["-"] INT]
        atom   := NUMBER | "q" | "r" INT | "t" INT | "(" expr ")"
                | "sqrt(" expr ")" | "exp(" expr ")"
                | "chi(" INT "," INT ")" | "chiI(" INT ["," INT] ")"
    """
    ts = TokenStream(text)
    e = _f_sum(ts, n)
    ts.expect_end()
    return e


def _f_sum(ts, n):
    if ts.accept("-"):
        acc = -_f_product(ts, n)
    else:
        ts.accept("+")
        acc = _f_product(ts, n)
    while True:
        if ts.accept("+"):
            acc = acc + _f_product(ts, n)
        elif ts.accept("-"):
            acc = acc - _f_product(ts, n)
        else:
            return acc


def _f_product(ts, n):
    acc = _f_factor(ts, n)
    while True:
        if ts.accept("*"):
            acc = acc * _f_factor(ts, n)
        elif ts.peek.kind == "op" and ts.peek.text == "/":
            tok = ts.next()
            d = _f_factor(ts, n)
            if not (len(d.items()) == 1 and d.items()[0][0] == () and d.items()[0][1].is_monomial()):
                raise ParseError("division only by nonzero constants or powers of q", tok.pos)
            acc = acc * (d ** -1)
        else:
            return acc


def _f_factor(ts, n):
    if ts.accept("-"):
        return -_f_factor(ts, n)
    base = _f_atom(ts, n)
    if ts.accept("^"):
        tok = ts.peek
        k = ts.read_int()
        try:
            base = base ** k
        except ValueError as exc:
            raise ParseError(str(exc), tok.pos) from None
    return base


def _f_atom(ts, n):
    tok = ts.next()
    if tok.kind == "num":
        return FunctionExpr.const(Fraction(tok.text))
    if tok.kind == "name":
        name = tok.text
        if name == "q":
            return FunctionExpr.q_power(1)
        if name[0] in "rt" and name[1:].isdigit():
            j = int(name[1:])
            if not 1 <= j <= n:
                raise ParseError(f"coordinate index {j} outside 1..{n}", tok.pos)
            return FunctionExpr.coord(j)
        if name in ("sqrt", "exp"):
            ts.expect("(")
            arg = _f_sum(ts, n)
            ts.expect(")")
            return arg.sqrt() if name == "sqrt" else arg.exp()
        if name in ("chi", "chiI"):
            ts.expect("(")
            a = ts.read_int()
            b = None
            if ts.accept(","):
                b = ts.read_int()
            ts.expect(")")
            if name == "chi":
                if b is None:
                    raise ParseError("chi needs (m, j)", tok.pos)
                m, j = a, b
                if not 1 <= j <= n:
                    raise ParseError(f"coordinate index {j} outside 1..{n}", tok.pos)
                return FunctionExpr.chi_point(m, j)
            j, lo = a, (1 if b is None else b)
            if not 1 <= j <= n:
                raise ParseError(f"coordinate index {j} outside 1..{n}", tok.pos)
            return FunctionExpr.chi_Iq(j, lo)
        raise ParseError(f"unknown identifier {name!r}", tok.pos)
    if tok.kind == "op" and tok.text == "(":
        e = _f_sum(ts, n)
        ts.expect(")")
        return e
    raise ParseError(f"unexpected token {tok.text or 'end of input'!r}", tok.pos)


# --------------------------------------------------------------------------
# generator terms and the representations pi_0 + ... + pi_n


@dataclass(frozen=True)
class GeneratorTerm:
    """f(|z_1|..|z_n|) S_1^{#l_1}..S_n^{#l_n} (side="left") or the shifts first (side="right")."""

    f: FunctionExpr
    l: tuple
    side: str = "left"
    term_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "l", tuple(int(x) for x in self.l))
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")

    @property
    def n(self):
        return len(self.l)


def term_star(term: GeneratorTerm) -> GeneratorTerm:
    # functions are real-valued, so conjugation leaves f unchanged
    side = "right" if term.side == "left" else "left"
    return GeneratorTerm(term.f, tuple(-x for x in term.l), side, term.term_id + "*" if term.term_id else "")


@functools.lru_cache(maxsize=32)
def _vanishing_grid(n, j, q, size=64):
    axis = np.concatenate([[0.0], np.geomspace(1e-3, q ** -12, size - 1)])
    others = [axis] * (n - 1)
    pts = np.array(list(itertools.product(*others))) if n > 1 else np.zeros((1, 0))
    pts = np.insert(pts, j - 1, 0.0, axis=1)
    pts.flags.writeable = False
    return pts


def check_vanishing(term: GeneratorTerm, q: float, extra_points=None, atol: float = 1e-12):
    """Reject a term whose f is nonzero somewhere on {r_j = 0} for a shifted coordinate j.

    Sampled on {r_j = 0} x (64-point grid)^(n-1), plus ``extra_points`` (e.g.
    lattice moduli) with column j zeroed. A sampled check, not a proof.
    """
    n = term.n
    for j in range(1, n + 1):
        if term.l[j - 1] == 0 or term.f.is_zero():
            continue
        pts = _vanishing_grid(n, j, q)
        if extra_points is not None and len(extra_points):
            ex = np.array(extra_points, dtype=float, copy=True)
            ex[:, j - 1] = 0.0
            pts = np.vstack([pts, ex])
        vals = term.f.evaluate(pts, q)
        bad = np.abs(vals) > atol
        if bad.any():
            p = pts[np.argmax(bad)]
            raise VanishingConditionError(
                f"term {term.term_id or term.f}: l_{j}={term.l[j - 1]} but f={vals[np.argmax(bad)]:.3g} at r={p.tolist()}"
            )


def spot_check_decay(term: GeneratorTerm, q: float, M: int, tol: float = 1e-6) -> bool:
    """True if |f| <= tol at points where some coordinate is as large as q^{-(M+4)}."""
    n = term.n
    big = q ** -(M + 4)
    rng = np.random.default_rng(0)
    pts = []
    for j in range(n):
        for _ in range(16):
            p = rng.uniform(0, 2, size=n)
            p[j] = big
            pts.append(p)
    vals = term.f.evaluate(np.array(pts), q)
    return bool(np.all(np.abs(vals) <= tol))


def _shift_power(rep, j, l):
    S = rep.S(j)
    if l < 0:
        S, l = S.adjoint(), -l
    out = SparseOperator.identity(rep.dim)
    for _ in range(l):
        out = S @ out
    return out


def _shift_product(rep, l):
    out = SparseOperator.identity(rep.dim)
    for j, lj in enumerate(l, start=1):
        if lj:
            out = out @ _shift_power(rep, j, lj)
    return out


def pi_k(term: GeneratorTerm, rep: RepComponent, check: bool = True) -> SparseOperator:
    """Operator of a generator term on one component.

    pi_k(f) multiplies by f at (|z_1|, .., |z_k|, 0, .., 0); pi_k(S_j) is the
    coordinate shift for j <= k and 0 for j > k; pi_0(f) = f(0, .., 0).
    """
    if term.n != rep.n:
        raise ValueError("term and representation differ in n")
    if check:
        check_vanishing(term, rep.q, extra_points=rep.moduli if rep.k > 0 else None)
    if rep.k == 0:
        val = term.f.evaluate(np.zeros((1, rep.n)), rep.q)[0] if not any(term.l) else 0.0
        return SparseOperator.diag([val])
    if any(lj != 0 for lj in term.l[rep.k:]):
        return SparseOperator.zeros(rep.dim)
    F = SparseOperator.diag(term.f.evaluate(rep.moduli, rep.q))
    P = _shift_product(rep, term.l)
    return F @ P if term.side == "left" else P @ F


def represent(terms, reps, check: bool = True) -> SparseOperator:
    """Block-diagonal (pi_0 + ... + pi_n)(sum of terms)."""
    terms = [terms] if isinstance(terms, GeneratorTerm) else list(terms)
    reps = list(reps)
    if check:
        atoms = [rep.moduli for rep in reps if rep.k > 0]
        atoms = np.vstack(atoms) if atoms else None
        for t in terms:
            check_vanishing(t, reps[0].q, extra_points=atoms)
    blocks = []
    for rep in reps:
        acc = SparseOperator.zeros(rep.dim)
        for t in terms:
            acc = acc + pi_k(t, rep, check=False)
        blocks.append(acc)
    return block_diag(blocks)


# --------------------------------------------------------------------------
# crossed symbols on the top component


class CrossedSymbol:
    """Finite sum  sum_m g_m(t) S_1^{#m_1}..S_n^{#m_n}  with one term per multi-index m."""

    __slots__ = ("n", "_terms")

    def __init__(self, n, terms=None):
        self.n = n
        acc = {}
        for m, g in (terms or {}).items():
            m = tuple(int(x) for x in m)
            if len(m) != n:
                raise ValueError("multi-index length differs from n")
            acc[m] = acc[m] + g if m in acc else g
        acc = {m: _restrict_to_range(g, m, n) for m, g in acc.items()}
        self._terms = {m: g for m, g in acc.items() if not g.is_zero()}

    @classmethod
    def function(cls, g, n):
        return cls(n, {(0,) * n: FunctionExpr._coerce(g)})

    @classmethod
    def shift(cls, j, n, power=1):
        m = [0] * n
        m[j - 1] = power
        return cls(n, {tuple(m): FunctionExpr.const(1)})

    def items(self):
        return sorted(self._terms.items())

    def __eq__(self, other):
        if not isinstance(other, CrossedSymbol):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def __add__(self, other):
        acc = dict(self._terms)
        for m, g in other._terms.items():
            acc[m] = acc[m] + g if m in acc else g
        return CrossedSymbol(self.n, acc)

    def __mul__(self, other):
        if isinstance(other, CrossedSymbol):
            return symbol_multiply(self, other)
        return CrossedSymbol(self.n, {m: g * other for m, g in self._terms.items()})

    def __rmul__(self, other):
        return CrossedSymbol(self.n, {m: other * g for m, g in self._terms.items()})

    def star(self):
        return symbol_star(self)

    def max_shift(self):
        return max((abs(x) for m in self._terms for x in m), default=0)

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for m, g in self.items():
            shifts = "".join(
                f"*S{j}^{x}" if x > 0 else f"*S{j}#^{-x}" for j, x in enumerate(m, start=1) if x
            )
            parts.append(f"({g}){shifts}")
        return " + ".join(parts)

    __repr__ = __str__


def _restrict_to_range(g, m, n):
    """Reduce top-level indicators of g to what is visible on the range of S^{#m}.

    On the top component t_j ranges over I_q for j < n, and S_j^a (a > 0) has
    range {t_j >= q^{-(a+1)}}; indicators are constant there below that level.
    """
    bottom = {j: 1 + max(m[j - 1], 0) for j in range(1, n)}
    acc = {}
    for mono, c in g.items():
        powers = {}
        dead = False
        for f, p in mono:
            if isinstance(f, _ChiPoint) and f.j in bottom:
                if f.m < bottom[f.j]:
                    dead = True
                    break
            elif isinstance(f, _ChiTail) and f.j in bottom:
                if f.lo <= bottom[f.j]:
                    continue
            powers[f] = p
        if dead:
            continue
        key = _simplify_monomial(powers)
        if key is not None:
            acc[key] = acc[key] + c if key in acc else c
    return FunctionExpr(acc)


def _defect_factor(a, b, j):
    """Function P with S_j^{#a} S_j^{#b} = P S_j^{#(a+b)} for a unilateral coordinate j."""
    if a > 0 and b < 0:
        k = min(a, -b)
        out = FunctionExpr.const(1)
        for s in range(a - k + 1, a + 1):
            out = out * (1 - FunctionExpr.chi_point(s, j))
        return out
    return FunctionExpr.const(1)


def symbol_multiply(x: CrossedSymbol, y: CrossedSymbol) -> CrossedSymbol:
    """Normal-form product using the top-component relation set."""
    if x.n != y.n:
        raise ValueError("symbols over different n")
    n = x.n
    acc = {}
    for a, f in x._terms.items():
        shifts = dict(enumerate(a, start=1))
        for b, g in y._terms.items():
            h = f * g.scale(shifts)
            for j in range(1, n):  # coordinate n is unitary
                h = h * _defect_factor(a[j - 1], b[j - 1], j)
            if h.is_zero():
                continue
            m = tuple(ai + bi for ai, bi in zip(a, b))
            acc[m] = acc[m] + h if m in acc else h
    return CrossedSymbol(n, acc)


def symbol_star(x: CrossedSymbol) -> CrossedSymbol:
    """(g S^{#m})* = g(q^{-m} t) S^{#(-m)} for real g."""
    out = {}
    for m, g in x._terms.items():
        neg = tuple(-v for v in m)
        out[neg] = g.scale(dict(enumerate(neg, start=1)))
    return CrossedSymbol(x.n, out)


def symbol_operator(x: CrossedSymbol, rep: RepComponent) -> SparseOperator:
    """pi_n of a symbol: multiplication by g at lattice coordinates t, then shifts."""
    if rep.k != rep.n or x.n != rep.n:
        raise ValueError("symbols act on the top component (k = n)")
    acc = SparseOperator.zeros(rep.dim)
    for m, g in x._terms.items():
        acc = acc + SparseOperator.diag(g.evaluate(rep.coords, rep.q)) @ _shift_product(rep, m)
    return acc


def symbol_vs_matrix(x: CrossedSymbol, y: CrossedSymbol, rep: RepComponent, d=None) -> float:
    """max |pi(x y) - pi(x) pi(y)| over interior rows of the top component."""
    lhs = symbol_operator(symbol_multiply(x, y), rep)
    rhs = symbol_operator(x, rep) @ symbol_operator(y, rep)
    diff = (lhs - rhs).csr
    rows = np.flatnonzero(rep.interior_mask(d))
    sub = diff[rows]
    return float(np.abs(sub.data).max()) if sub.nnz else 0.0


# --------------------------------------------------------------------------
# norms


def _build_reps(trunc, spectrum, builder):
    if builder == "abstract":
        A = spectrum if isinstance(spectrum, FiberSpectrum) else FiberSpectrum(spectrum.samples)
        return [build_component_abstract(k, trunc, A) for k in range(trunc.n + 1)]
    measure = spectrum if isinstance(spectrum, MeasureSpec) else MeasureSpec(spectrum.samples)
    return [build_component_lattice(k, trunc, measure) for k in range(trunc.n + 1)]


def _embed(prev_rep, prev_vec, rep):
    if prev_rep is None or prev_vec is None:
        return None
    pos = rep.position(prev_rep.index, prev_rep.sample)
    out = np.zeros(rep.dim, dtype=np.complex128)
    ok = pos >= 0
    out[pos[ok]] = prev_vec[ok]
    return out if np.any(out) else None


def norm_estimate(terms, spectrum, sweep, builder="lattice", iterations=300, seed=0):
    """Operator-norm lower bounds of (pi_0 + .. + pi_n)(sum of terms) along a truncation sweep.

    Each block starts from the previous truncation's top vector (embedded) as
    well as a fresh seeded vector; since smaller truncations are compressions
    of larger ones the warm start never loses ground, and the reported value
    is additionally the running max. Pure multiplication blocks report the
    exact lattice max of |f|.
    """
    terms = [terms] if isinstance(terms, GeneratorTerm) else list(terms)
    sweep = list(sweep)
    sizes = [(t.N, t.M) for t in sweep]
    if any(b[0] < a[0] or b[1] < a[1] for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sweep must be sorted by increasing truncation size")
    rows = []
    prev = {}
    best = 0.0
    for trunc in sweep:
        reps = _build_reps(trunc, spectrum, builder)
        atoms = np.vstack([rep.moduli for rep in reps if rep.k > 0])
        for t in terms:
            check_vanishing(t, trunc.q, extra_points=atoms)
        per_k = {}
        for rep in reps:
            A = SparseOperator.zeros(rep.dim)
            for t in terms:
                A = A + pi_k(t, rep, check=False)
            if A.nnz == 0:
                per_k[rep.k] = 0.0
                prev[rep.k] = (rep, None)
                continue
            fresh, v = operator_norm_lb(A, iterations, seed, return_vector=True)
            val = fresh
            start = _embed(*prev.get(rep.k, (None, None)), rep)
            if start is not None:
                warm, v2 = operator_norm_lb(A, iterations, seed, start=start, return_vector=True)
                if warm >= val:
                    val, v = warm, v2
            per_k[rep.k] = val
            prev[rep.k] = (rep, v)
        raw = max(per_k.values())
        best = max(best, raw)
        rows.append({"N": trunc.N, "M": trunc.M, "norm_lb": best, "raw": raw, "per_k": per_k})
    return rows


# --------------------------------------------------------------------------
# classical picture


def classical_value(term: GeneratorTerm, r, theta, q=0.5):
    """f(r) e^{i l.theta} for polar points (arrays of shape (npts, n))."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phase = np.exp(1j * theta @ np.asarray(term.l, dtype=float))
    return term.f.evaluate(r, q) * phase


@dataclass
class SeparationReport:
    pairs_checked: int
    unseparated: list = field(default_factory=list)
    max_differences: list = field(default_factory=list)

    @property
    def all_separated(self):
        return not self.unseparated


def classical_separation(points, family, q_ignored=0.5, tol=1e-9) -> SeparationReport:
    """Which pairs of points the classical functions f(|z|) e^{i l.theta} fail to tell apart.

    ``points`` is a list of pairs; each point is either a complex vector or a
    polar pair (r, theta) so that a phase on a zero coordinate can be given.
    """
    left_r, left_t, right_r, right_t = [], [], [], []
    for a, b in points:
        for (rs, ts), p in ((( left_r, left_t), a), ((right_r, right_t), b)):
            r, t = _polar(p)
            rs.append(r)
            ts.append(t)
    left_r, left_t = np.array(left_r), np.array(left_t)
    right_r, right_t = np.array(right_r), np.array(right_t)
    diffs = np.zeros(len(points))
    for term in family:
        va = classical_value(term, left_r, left_t, q_ignored)
        vb = classical_value(term, right_r, right_t, q_ignored)
        diffs = np.maximum(diffs, np.abs(va - vb))
    report = SeparationReport(len(points), max_differences=diffs.tolist())
    report.unseparated = [i for i, dmax in enumerate(diffs) if dmax <= tol]
    return report


def random_point_pairs(count: int, n: int, seed: int = 0, dim: int = 3):
    """Seeded pairs of points of C^n (zero-padded to C^dim).

    A quarter of the pairs share moduli and differ only in phases, a quarter
    share one zero coordinate (n > 1); the rest are independent.
    """
    if not 1 <= n <= dim:
        raise ValueError(f"n must lie in 1..{dim}")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        r1 = rng.exponential(1.0, n)
        t1 = rng.uniform(-np.pi, np.pi, n)
        kind = i % 4
        if kind == 0:
            r2, t2 = r1, rng.uniform(-np.pi, np.pi, n)
        elif kind == 1 and n > 1:
            j = rng.integers(n)
            r1[j] = 0.0
            r2, t2 = rng.exponential(1.0, n), rng.uniform(-np.pi, np.pi, n)
            r2[j] = 0.0
        else:
            r2, t2 = rng.exponential(1.0, n), rng.uniform(-np.pi, np.pi, n)
        pad = np.zeros(dim - n)
        a = np.concatenate([r1 * np.exp(1j * t1), pad])
        b = np.concatenate([r2 * np.exp(1j * t2), pad])
        pairs.append((a, b))
    return pairs


def zero_phase_pairs(count: int, n: int, seed: int = 0, dim: int = 3):
    """Polar pairs that differ only in the phase of a coordinate whose modulus is 0."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        r = np.concatenate([rng.exponential(1.0, n), np.zeros(dim - n)])
        j = rng.integers(n)
        r[j] = 0.0
        t1 = rng.uniform(-np.pi, np.pi, dim)
        t2 = t1.copy()
        t2[j] = rng.uniform(-np.pi, np.pi)
        pairs.append(((r, t1), (r.copy(), t2)))
    return pairs


def _polar(p):
    if isinstance(p, tuple) and len(p) == 2 and np.ndim(p[0]) == 1 and not np.iscomplexobj(p[0]):
        return np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    z = np.asarray(p, dtype=complex)
    return np.abs(z), np.angle(z)


def separation_family(n=3):
    """Fixed 12-term family of C0 generators (all satisfy the vanishing condition) on C^3.

    With E = exp(-(r1+r2+r3)):
    E, r1 E, r2 E, r3 E (l = 0); r_j E with l = e_j; r1^2 E with l = 2 e_1;
    r1 r2 E with l = (1,-1,0); r2 r3 E with l = (0,1,-1); r1 r3 E with
    l = (1,0,1); exp(-(r1^2+r2^2+r3^2)) with l = 0.
    """
    if n != 3:
        raise ValueError("the fixed family is defined on C^3; embed lower-dimensional points")
    specs = [
        ("E", "exp(-(r1+r2+r3))", (0, 0, 0)),
        ("r1E", "r1*exp(-(r1+r2+r3))", (0, 0, 0)),
        ("r2E", "r2*exp(-(r1+r2+r3))", (0, 0, 0)),
        ("r3E", "r3*exp(-(r1+r2+r3))", (0, 0, 0)),
        ("r1E_l1", "r1*exp(-(r1+r2+r3))", (1, 0, 0)),
        ("r2E_l2", "r2*exp(-(r1+r2+r3))", (0, 1, 0)),
        ("r3E_l3", "r3*exp(-(r1+r2+r3))", (0, 0, 1)),
        ("r1sqE_2l1", "r1^2*exp(-(r1+r2+r3))", (2, 0, 0)),
        ("r1r2E", "r1*r2*exp(-(r1+r2+r3))", (1, -1, 0)),
        ("r2r3E", "r2*r3*exp(-(r1+r2+r3))", (0, 1, -1)),
        ("r1r3E", "r1*r3*exp(-(r1+r2+r3))", (1, 0, 1)),
        ("G", "exp(-(r1^2+r2^2+r3^2))", (0, 0, 0)),
    ]
    return [GeneratorTerm(parse_function(f, 3), l, term_id=tid) for tid, f, l in specs]


# --------------------------------------------------------------------------
# random objects for property checks


def _bounded_atom(rng, j, q):
    t = FunctionExpr.coord(j)
    choice = rng.randrange(5)
    if choice == 0:
        return (-t).exp()
    if choice == 1:
        return t * (-t).exp()
    if choice == 2:
        return FunctionExpr.chi_point(rng.randint(1, 3), j)
    if choice == 3:
        return FunctionExpr.chi_Iq(j) * (t * t - 1).sqrt() * (-t).exp()
    return FunctionExpr.const(Fraction(rng.randint(-4, 4), rng.randint(1, 4)))


def random_symbol(rng: random.Random, n: int, max_shift: int = 2, max_terms: int = 3, q: float = 0.5):
    terms = {}
    for _ in range(rng.randint(1, max_terms)):
        m = tuple(rng.randint(-max_shift, max_shift) for _ in range(n))
        g = FunctionExpr.const(Fraction(rng.randint(1, 5), rng.randint(1, 3)))
        for _ in range(rng.randint(1, 2)):
            g = g * _bounded_atom(rng, rng.randint(1, n), q)
        terms[m] = terms[m] + g if m in terms else g
    return CrossedSymbol(n, terms)


def random_generator_term(rng: random.Random, n: int, max_shift: int = 2) -> GeneratorTerm:
    """C0 term with the vanishing condition built in (a factor r_j for each shifted j)."""
    l = tuple(rng.randint(-max_shift, max_shift) if rng.random() < 0.6 else 0 for _ in range(n))
    r = [FunctionExpr.coord(j) for j in range(1, n + 1)]
    total = r[0]
    for x in r[1:]:
        total = total + x
    f = FunctionExpr.const(Fraction(rng.randint(1, 6), rng.randint(1, 3))) * (-total).exp()
    for j, lj in enumerate(l, start=1):
        if lj:
            f = f * r[j - 1] ** rng.randint(1, 2)
    if rng.random() < 0.5:
        j = rng.randint(1, n)
        f = f * (1 + r[j - 1] * r[j - 1]) * Fraction(1, 2)
    return GeneratorTerm(f, l, term_id=f"rand{rng.randrange(10**6)}")


# --------------------------------------------------------------------------
# term files


def parse_term_line(line: str, n: int, lineno: int = 0):
    """``[id:] l=<ints>; f=<expr> [; side=right]`` -> GeneratorTerm (None for blank/comment)."""
    text = line.split("#", 1)[0].strip() if not line.lstrip().startswith("f=") else line.strip()
    if not text:
        return None
    term_id = f"t{lineno}"
    head, sep, rest = text.partition(":")
    if sep and "=" not in head:
        term_id, text = head.strip(), rest.strip()
    fields = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, eq, value = part.partition("=")
        if not eq:
            raise ParseError(f"line {lineno}: expected key=value, got {part!r}", 0)
        fields[key.strip()] = value.strip()
    if "f" not in fields or "l" not in fields:
        raise ParseError(f"line {lineno}: need both l= and f=", 0)
    l = tuple(int(x) for x in fields["l"].strip("[]() ").replace(",", " ").split())
    if len(l) != n:
        raise ParseError(f"line {lineno}: l has {len(l)} entries, expected {n}", 0)
    return GeneratorTerm(parse_function(fields["f"], n), l, fields.get("side", "left"), term_id)


def read_terms(path_or_lines, n: int):
    if isinstance(path_or_lines, (str, bytes)) or hasattr(path_or_lines, "__fspath__"):
        with open(path_or_lines) as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(path_or_lines)
    out = []
    for i, line in enumerate(lines, start=1):
        t = parse_term_line(line, n, i)
        if t is not None:
            out.append(t)
    return out


def norm_report_lines(rows, terms_label):
    out = []
    for row in rows:
        for k, v in sorted(row["per_k"].items()):
            out.append(
                json.dumps(
                    {"term_id": terms_label, "k": k, "norm_lb": v, "truncation": [row["N"], row["M"]]},
                    sort_keys=True,
                )
            )
        out.append(
            json.dumps(
                {"term_id": terms_label, "k": "sup", "norm_lb": row["norm_lb"], "truncation": [row["N"], row["M"]]},
                sort_keys=True,
            )
        )
    return out

