"""Exact noncommutative *-polynomials in z_1..z_n, z_1*..z_n* over Laurent polynomials in q.

Relations of the quantum complex plane, oriented as rewrite rules on adjacent letters::

    (a) z_j  z_i   -> q z_i z_j                                  j > i
    (b) z_i* z_j*  -> q z_j* z_i*                                j > i
    (c) z_j  z_i*  -> q z_i* z_j                                 j != i
    (d) z_i  z_i*  -> q^2 z_i* z_i - (1-q^2) sum_{j>i} z_j* z_j  i < n
    (e) z_n  z_n*  -> q^2 z_n* z_n

A word is normal when every starred letter precedes every unstarred one, the
starred indices are non-increasing and the unstarred indices non-decreasing.
All rule coefficients lie in Z[q].
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

from ._lexer import ParseError, TokenStream

__all__ = [
    "LaurentQ",
    "QPolynomial",
    "NumericPolynomial",
    "ConfluenceReport",
    "ParseError",
    "parse_expr",
    "normal_form",
    "star",
    "build_Q",
    "verify_identity",
    "identity_suite",
    "check_local_confluence",
    "evaluate_at_q",
    "is_normal_word",
    "format_word",
    "longest_reduction_path",
    "reduction_path_bound",
]

Letter = tuple  # (index, starred)
Word = tuple  # tuple of letters


_SCALARS = (int, Fraction)


class LaurentQ:
    """Finite sum  sum_e c_e q^e  with rational c_e. Immutable; zeros are never stored."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, coeffs: Mapping[int, object] | None = None):
        items = []
        if coeffs:
            for e, c in coeffs.items():
                c = Fraction(c)
                if c != 0:
                    items.append((int(e), c))
        items.sort()
        self._terms = tuple(items)
        self._hash = hash(self._terms)

    @classmethod
    def const(cls, c) -> "LaurentQ":
        return cls({0: c})

    @classmethod
    def q_power(cls, e: int, c=1) -> "LaurentQ":
        return cls({e: c})

    @staticmethod
    def coerce(x) -> "LaurentQ":
        if isinstance(x, LaurentQ):
            return x
        return LaurentQ.const(x)

    def items(self):
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    @property
    def min_exponent(self) -> int:
        return self._terms[0][0]

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if not isinstance(other, LaurentQ):
            try:
                other = LaurentQ.const(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return self._hash

    def __add__(self, other):
        if not isinstance(other, _SCALARS):
            return NotImplemented
        other = LaurentQ.coerce(other)
        acc = dict(self._terms)
        for e, c in other._terms:
            acc[e] = acc.get(e, 0) + c
        return LaurentQ(acc)

    __radd__ = __add__

    def __neg__(self):
        return LaurentQ({e: -c for e, c in self._terms})

    def __sub__(self, other):
        if not isinstance(other, _SCALARS):
            return NotImplemented
        return self + (-LaurentQ.coerce(other))

    def __rsub__(self, other):
        return LaurentQ.coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, _SCALARS):
            return NotImplemented
        other = LaurentQ.coerce(other)
        acc = {}
        for e1, c1 in self._terms:
            for e2, c2 in other._terms:
                acc[e1 + e2] = acc.get(e1 + e2, 0) + c1 * c2
        return LaurentQ(acc)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            if not self.is_monomial():
                raise ValueError("only q-monomials are invertible")
            (e, c), = self._terms
            return LaurentQ({-e * (-k): Fraction(1) / c ** (-k)})
        out = LaurentQ.const(1)
        for _ in range(k):
            out = out * self
        return out

    def evaluate(self, q: float) -> float:
        return float(sum(float(c) * q ** e for e, c in self._terms))

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for e, c in self._terms:
            sign = "-" if c < 0 else "+"
            a = abs(c)
            if e == 0:
                body = str(a)
            else:
                qs = "q" if e == 1 else f"q^{e}"
                body = qs if a == 1 else f"{a}*{qs}"
            parts.append((sign, body))
        first_sign, first_body = parts[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            out += sign + body
        return out

    def __repr__(self):
        return f"LaurentQ({str(self)!r})"


_SCALARS = (int, Fraction, LaurentQ)

ONE = LaurentQ.const(1)
Q = LaurentQ.q_power(1)
Q2 = LaurentQ.q_power(2)
ONE_MINUS_Q2 = ONE - Q2


def format_word(word: Word) -> str:
    if not word:
        return "1"
    return "*".join(f"z{j}#" if s else f"z{j}" for j, s in word)


def _word_key(word: Word):
    return (len(word), tuple((j, 0 if s else 1) for j, s in word))


class QPolynomial:
    """Element of the free *-algebra on n generators: Word -> LaurentQ."""

    __slots__ = ("n", "_terms", "_hash")

    def __init__(self, n: int, terms: Mapping[Word, LaurentQ] | None = None):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        clean = {}
        if terms:
            for w, c in terms.items():
                c = LaurentQ.coerce(c)
                if not c.is_zero():
                    clean[tuple(w)] = c
        self._terms = clean
        self._hash = None

    # constructors
    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def one(cls, n):
        return cls(n, {(): ONE})

    @classmethod
    def scalar(cls, n, c):
        return cls(n, {(): LaurentQ.coerce(c)})

    @classmethod
    def gen(cls, j: int, n: int, starred: bool = False):
        if not 1 <= j <= n:
            raise ValueError(f"generator index {j} outside 1..{n}")
        return cls(n, {((j, bool(starred)),): ONE})

    # container protocol
    def items(self):
        return sorted(self._terms.items(), key=lambda kv: _word_key(kv[0]))

    def words(self):
        return [w for w, _ in self.items()]

    def coefficient(self, word) -> LaurentQ:
        return self._terms.get(tuple(word), LaurentQ())

    def __len__(self):
        return len(self._terms)

    def is_zero(self):
        return not self._terms

    def is_normal(self):
        return all(is_normal_word(w) for w in self._terms)

    def degree(self):
        return max((len(w) for w in self._terms), default=0)

    # arithmetic
    def _check(self, other):
        if isinstance(other, QPolynomial):
            if other.n != self.n:
                raise ValueError("polynomials over different n")
            return other
        return QPolynomial.scalar(self.n, other)

    def __add__(self, other):
        other = self._check(other)
        acc = dict(self._terms)
        for w, c in other._terms.items():
            acc[w] = acc[w] + c if w in acc else c
        return QPolynomial(self.n, acc)

    __radd__ = __add__

    def __neg__(self):
        return QPolynomial(self.n, {w: -c for w, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return self._check(other) - self

    def __mul__(self, other):
        if not isinstance(other, QPolynomial):
            c = LaurentQ.coerce(other)
            return QPolynomial(self.n, {w: v * c for w, v in self._terms.items()})
        other = self._check(other)
        acc = {}
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                w = w1 + w2
                c = c1 * c2
                acc[w] = acc[w] + c if w in acc else c
        return QPolynomial(self.n, acc)

    def __rmul__(self, other):
        c = LaurentQ.coerce(other)
        return QPolynomial(self.n, {w: c * v for w, v in self._terms.items()})

    def __pow__(self, k: int):
        if k < 0:
            if set(self._terms) <= {()}:
                return QPolynomial.scalar(self.n, self.coefficient(()) ** k)
            raise ValueError("negative power of a non-scalar polynomial")
        out = QPolynomial.one(self.n)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, QPolynomial):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.n, frozenset(self._terms.items())))
        return self._hash

    def star(self):
        return star(self)

    def normal_form(self):
        return normal_form(self)

    def __str__(self):
        if not self._terms:
            return "0"
        out = []
        for i, (w, c) in enumerate(self.items()):
            neg = c.items()[0][1] < 0
            if neg:
                c = -c
            if c == ONE:
                body = format_word(w)
            else:
                ctext = str(c) if c.is_monomial() else f"({c})"
                body = ctext if not w else f"{ctext}*{format_word(w)}"
            if i == 0:
                out.append(("-" if neg else "") + body)
            else:
                out.append((" - " if neg else " + ") + body)
        return "".join(out)

    def __repr__(self):
        return f"QPolynomial(n={self.n}, {str(self)!r})"


# --------------------------------------------------------------------------
# parsing


def parse_expr(text: str, n: int) -> QPolynomial:
    """Parse an expression such as ``"q^2*z1#*z1 - (1-q^2)*z2#*z2"``.

    Grammar (``#`` marks the adjoint)::

        expr   := ["+"|"-"] term {("+"|"-") term}
        term   := factor {"*" factor}
        factor := "-" factor | atom ["^" ["-"] INT]
        atom   := INT | "q" | "z" INT ["#"] | "(" expr ")"

    Negative exponents are allowed only on scalar q-monomials. The result is
    not normalized.
    """
    ts = TokenStream(text)
    p = _parse_sum(ts, n)
    ts.expect_end()
    return p


def _parse_sum(ts, n):
    if ts.accept("-"):
        acc = -_parse_product(ts, n)
    else:
        ts.accept("+")
        acc = _parse_product(ts, n)
    while True:
        if ts.accept("+"):
            acc = acc + _parse_product(ts, n)
        elif ts.accept("-"):
            acc = acc - _parse_product(ts, n)
        else:
            return acc


def _parse_product(ts, n):
    acc = _parse_factor(ts, n)
    while ts.accept("*"):
        acc = acc * _parse_factor(ts, n)
    return acc


def _parse_factor(ts, n):
    if ts.accept("-"):
        return -_parse_factor(ts, n)
    base = _parse_atom(ts, n)
    if ts.accept("^"):
        tok = ts.peek
        k = ts.read_int()
        try:
            base = base ** k
        except ValueError as exc:
            raise ParseError(str(exc), tok.pos) from None
    return base


def _parse_atom(ts, n):
    tok = ts.next()
    if tok.kind == "num":
        if not tok.text.isdigit():
            raise ParseError("only integer constants are allowed", tok.pos)
        return QPolynomial.scalar(n, int(tok.text))
    if tok.kind == "name":
        name = tok.text
        starred = name.endswith("#")
        if starred:
            name = name[:-1]
        elif ts.accept("#"):
            starred = True
        if name == "q" and not starred:
            return QPolynomial.scalar(n, Q)
        if len(name) > 1 and name[0] == "z" and name[1:].isdigit():
            j = int(name[1:])
            if not 1 <= j <= n:
                raise ParseError(f"generator index {j} outside 1..{n}", tok.pos)
            return QPolynomial.gen(j, n, starred)
        raise ParseError(f"unknown identifier {tok.text!r}", tok.pos)
    if tok.kind == "op" and tok.text == "(":
        p = _parse_sum(ts, n)
        ts.expect(")")
        return p
    raise ParseError(f"unexpected token {tok.text or 'end of input'!r}", tok.pos)


# --------------------------------------------------------------------------
# rewriting


def _out_of_order(a, b) -> bool:
    (i, sa), (j, sb) = a, b
    if sa != sb:
        return not sa  # unstarred before starred
    if sa:
        return i < j
    return i > j


def is_normal_word(word: Word) -> bool:
    return not any(_out_of_order(word[p], word[p + 1]) for p in range(len(word) - 1))


@lru_cache(maxsize=None)
def _rule(a, b, n):
    """Right-hand side for the out-of-order pair (a, b) as ((coef, word), ...)."""
    (i, sa), (j, sb) = a, b
    if not sa and not sb:  # (a)
        return ((Q, ((j, False), (i, False))),)
    if sa and sb:  # (b)
        return ((Q, ((j, True), (i, True))),)
    if i != j:  # (c)
        return ((Q, ((j, True), (i, False))),)
    out = [(Q2, ((i, True), (i, False)))]  # (d)/(e)
    for m in range(i + 1, n + 1):
        out.append((-ONE_MINUS_Q2, ((m, True), (m, False))))
    return tuple(out)


def _redex_positions(word):
    return [p for p in range(len(word) - 1) if _out_of_order(word[p], word[p + 1])]


def _rewrite_at(word, p, n):
    return [(c, word[:p] + rep + word[p + 2:]) for c, rep in _rule(word[p], word[p + 1], n)]


@lru_cache(maxsize=None)
def _nf_word(word, n, strategy):
    positions = _redex_positions(word)
    if not positions:
        return ((word, ONE),)
    p = positions[0] if strategy == "leftmost" else positions[-1]
    acc = {}
    for c, w in _rewrite_at(word, p, n):
        for w2, c2 in _nf_word(w, n, strategy):
            v = c * c2
            acc[w2] = acc[w2] + v if w2 in acc else v
    return tuple((w, c) for w, c in acc.items() if not c.is_zero())


def normal_form(p: QPolynomial, strategy: str = "leftmost") -> QPolynomial:
    """Reduce ``p`` to the canonical normal form modulo the defining relations.

    ``strategy`` picks the redex ("leftmost" or "rightmost"); the result does
    not depend on it.
    """
    if strategy not in ("leftmost", "rightmost"):
        raise ValueError(f"unknown strategy {strategy!r}")
    acc = {}
    for w, c in p._terms.items():
        for w2, c2 in _nf_word(w, p.n, strategy):
            v = c * c2
            acc[w2] = acc[w2] + v if w2 in acc else v
    return QPolynomial(p.n, acc)


def star(p: QPolynomial) -> QPolynomial:
    # q is real and coefficients rational, so conjugation fixes coefficients
    return QPolynomial(
        p.n, {tuple((j, not s) for j, s in reversed(w)): c for w, c in p._terms.items()}
    )


def longest_reduction_path(word: Word, n: int) -> int:
    """Longest chain of rule applications starting from ``word`` (any redex, any branch)."""

    @lru_cache(maxsize=None)
    def depth(w):
        best = 0
        for p in _redex_positions(w):
            for _, w2 in _rewrite_at(w, p, n):
                best = max(best, 1 + depth(w2))
        return best

    return depth(tuple(word))


def reduction_path_bound(word: Word) -> int:
    """Upper bound on reduction length from the lexicographic termination measure.

    The pair (star-after-nonstar inversions, in-block inversions) drops
    lexicographically with each step: (c)/(d)/(e) remove exactly one mixed
    inversion; (a)/(b) remove one in-block inversion.
    """
    L = len(word)
    mixed = sum(
        1 for x, y in itertools.combinations(word, 2) if not x[1] and y[1]
    )
    block = L * (L - 1) // 2
    return (mixed + 1) * (block + 1)


# --------------------------------------------------------------------------
# named elements and identities


def build_Q(k: int, n: int) -> QPolynomial:
    """Q_k = sum_{j=k}^n z_j* z_j (normal as built)."""
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    return QPolynomial(n, {((j, True), (j, False)): ONE for j in range(k, n + 1)})


def _Q_or_zero(k, n):
    return build_Q(k, n) if k <= n else QPolynomial.zero(n)


def verify_identity(lhs: QPolynomial, rhs: QPolynomial):
    """Return ``(holds, residual)`` with residual = normal_form(lhs - rhs)."""
    residual = normal_form(lhs - rhs)
    return residual.is_zero(), residual


def identity_suite(n: int, max_degree: int = 3):
    """All commutation identities between generators and Q_k, as (name, lhs, rhs)."""
    z = [None] + [QPolynomial.gen(j, n) for j in range(1, n + 1)]
    zs = [None] + [QPolynomial.gen(j, n, True) for j in range(1, n + 1)]
    out = []
    for k in range(1, n + 1):
        out.append(
            (f"zzQ[k={k}]", z[k] * zs[k] - Q2 * (zs[k] * z[k]), -ONE_MINUS_Q2 * _Q_or_zero(k + 1, n))
        )
    for k in range(1, n + 1):
        Qk = build_Q(k, n)
        for i in range(1, k):
            out.append((f"zQ[i={i},k={k}]", z[i] * Qk, Qk * z[i]))
            out.append((f"z*Q[i={i},k={k}]", zs[i] * Qk, Qk * zs[i]))
        for j in range(k, n + 1):
            out.append((f"Qz[j={j},k={k}]", z[j] * Qk, Q2 * (Qk * z[j])))
            out.append((f"Qz*[j={j},k={k}]", zs[j] * Qk, LaurentQ.q_power(-2) * (Qk * zs[j])))
        for d in range(max_degree + 1):
            Qd = Qk ** d
            for i in range(1, k):
                out.append((f"zpQ[i={i},k={k},d={d}]", z[i] * Qd, Qd * z[i]))
                out.append((f"z*pQ[i={i},k={k},d={d}]", zs[i] * Qd, Qd * zs[i]))
            for j in range(k, n + 1):
                out.append((f"pQz[j={j},k={k},d={d}]", z[j] * Qd, LaurentQ.q_power(2 * d) * (Qd * z[j])))
                out.append(
                    (f"pQz*[j={j},k={k},d={d}]", zs[j] * Qd, LaurentQ.q_power(-2 * d) * (Qd * zs[j]))
                )
    return out


# --------------------------------------------------------------------------
# confluence


@dataclass
class ConfluenceReport:
    n: int
    max_len: int
    words_checked: int
    exhaustive: bool
    divergent: list = field(default_factory=list)

    @property
    def confluent(self) -> bool:
        return not self.divergent


def _all_letters(n):
    return [(j, s) for j in range(1, n + 1) for s in (False, True)]


def check_local_confluence(
    n: int, max_len: int, exhaustive_limit: int = 200_000, sample_size: int = 20_000, seed: int = 0
) -> ConfluenceReport:
    """Reduce every word by each possible first rewrite and compare the outcomes.

    Every word up to ``max_len`` is checked when there are at most
    ``exhaustive_limit`` of them; otherwise ``sample_size`` random words are
    drawn with a seeded generator. The leftmost and rightmost strategies are
    compared as well.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    letters = _all_letters(n)
    total = sum(len(letters) ** L for L in range(max_len + 1))
    exhaustive = total <= exhaustive_limit
    if exhaustive:
        words = itertools.chain.from_iterable(
            itertools.product(letters, repeat=L) for L in range(max_len + 1)
        )
    else:
        rng = random.Random(seed)
        words = (
            tuple(rng.choice(letters) for _ in range(rng.randint(2, max_len)))
            for _ in range(sample_size)
        )
    report = ConfluenceReport(n, max_len, 0, exhaustive)
    for w in words:
        report.words_checked += 1
        base = QPolynomial(n, dict(_nf_word(w, n, "leftmost")))
        other = QPolynomial(n, dict(_nf_word(w, n, "rightmost")))
        if other != base:
            report.divergent.append((format_word(w), "rightmost", str(base), str(other)))
        for p in _redex_positions(w):
            acc = QPolynomial.zero(n)
            for c, w2 in _rewrite_at(w, p, n):
                acc = acc + c * QPolynomial(n, dict(_nf_word(w2, n, "leftmost")))
            if acc != base:
                report.divergent.append((format_word(w), f"first@{p}", str(base), str(acc)))
    return report


# --------------------------------------------------------------------------
# numeric bridge


class NumericPolynomial:
    """Polynomial with floating complex coefficients for a fixed value of q."""

    def __init__(self, n: int, q_value: float, terms: Mapping[Word, complex]):
        self.n = n
        self.q_value = q_value
        self.terms = {w: complex(c) for w, c in terms.items() if c != 0}

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: _word_key(kv[0]))

    def __getitem__(self, word):
        return self.terms.get(tuple(word), 0j)

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({c:.17g})*{format_word(w)}" for w, c in self.items())


def evaluate_at_q(p: QPolynomial, q_value: float) -> NumericPolynomial:
    if not 0 < q_value < 1:
        raise ValueError(f"q_value must lie in (0, 1), got {q_value}")
    return NumericPolynomial(p.n, q_value, {w: c.evaluate(q_value) for w, c in p._terms.items()})


def generator_words(n: int, length: int) -> Iterable[Word]:
    return itertools.product(_all_letters(n), repeat=length)
