"""Truncated well-behaved representations of the quantum complex plane.

A component of type k lives on basis vectors h_{i_1..i_{k-1}, i_k}(a) with
unilateral indices i_j in 1..N (j < k), a bilateral index |i_k| <= M and a
fiber sample a in (q, 1]. Raising an index past its bound maps to 0; the
bottom of a unilateral index needs no cutoff because the weight
sqrt(q^{-2 i} - 1) vanishes at i = 0.

Two builders produce the same operators in different bases:

* ``build_component_abstract`` uses the weighted-shift formulas in index form;
* ``build_component_lattice`` evaluates multiplication/shift formulas on the
  atoms (q^{-i_1}, ..., q^{-i_{k-1}}, s q^{e}) of an atomic q-invariant measure
  and relabels e = -i_k.

Relation checks are only claimed on the interior: unilateral indices at least
``d`` below N, bilateral index at least ``d`` away from +-M.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .opkernel import SparseOperator, block_diag

__all__ = [
    "TruncationSpec",
    "FiberSpectrum",
    "MeasureSpec",
    "RepComponent",
    "RepSum",
    "DomainError",
    "build_qnormal",
    "build_qhyp",
    "build_component_abstract",
    "build_component_lattice",
    "build_all_components",
    "basis_permutation",
    "Q_operator",
    "spectral_projection",
    "stratum_interval",
    "stratum_projection",
    "w_operator",
    "w_relation_residual",
    "inv_sqrt_Q",
    "verify_relations",
    "RelationReport",
    "direct_sum",
    "polynomial_operator",
    "DEFAULT_F_FAMILY",
]


class DomainError(ValueError):
    """Operator requested where it is not defined (e.g. inverse of a zero Q)."""


@dataclass(frozen=True)
class TruncationSpec:
    n: int
    q: float
    N: int = 8
    M: int = 8
    d: int = 3

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.N < 2 or self.M < 1:
            raise ValueError("need N >= 2 and M >= 1")
        if not 0 <= self.d < min(self.N, self.M):
            raise ValueError(f"interior margin d={self.d} must satisfy 0 <= d < min(N, M)")

    def with_size(self, N=None, M=None, d=None):
        return TruncationSpec(self.n, self.q, N or self.N, M or self.M, self.d if d is None else d)


@dataclass(frozen=True)
class FiberSpectrum:
    """Eigenvalue samples of the fiber operator; each must lie in (q, 1]."""

    samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(float(a) for a in self.samples))
        if not self.samples:
            raise ValueError("empty fiber spectrum")

    @classmethod
    def filtered(cls, samples, q):
        kept = [a for a in samples if q < a <= 1.0]
        if not kept:
            raise ValueError(f"no samples in ({q}, 1]")
        return cls(tuple(kept))

    def validate(self, q):
        bad = [a for a in self.samples if not q < a <= 1.0]
        if bad:
            raise ValueError(f"fiber samples {bad} outside ({q}, 1]")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class MeasureSpec:
    """Atomic q-invariant measure: atoms s_r q^e (all e) with weight w_r each."""

    samples: tuple
    weights: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))
        w = tuple(float(x) for x in self.weights) or (1.0,) * len(self.samples)
        if len(w) != len(self.samples):
            raise ValueError("samples and weights differ in length")
        if any(x <= 0 for x in w):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "weights", w)

    def validate(self, q):
        FiberSpectrum(self.samples).validate(q)


# --------------------------------------------------------------------------
# one-dimensional building blocks


def build_qnormal(A: FiberSpectrum, M: int, q_value: float) -> SparseOperator:
    """Bilateral weighted shift z h_{s,i} = q^{-i} a_s h_{s,i+1}, |i| <= M."""
    if M < 1 or not 0 < q_value < 1:
        raise ValueError("invalid window or q")
    A.validate(q_value)
    width = 2 * M + 1
    rows, cols, vals = [], [], []
    for s, a in enumerate(A.samples):
        for i in range(-M, M):
            src = s * width + (i + M)
            rows.append(src + 1)
            cols.append(src)
            vals.append(q_value ** (-i) * a)
    return SparseOperator.from_triplets(len(A) * width, rows, cols, vals)


def build_qhyp(M: int, q_value: float) -> SparseOperator:
    """Unilateral weighted shift w h_i = sqrt(q^{-2i} - 1) h_{i+1} on i = 1..M."""
    if M < 2 or not 0 < q_value < 1:
        raise ValueError("invalid window or q")
    rows = [i for i in range(1, M)]  # 0-based row of h_{i+1}
    cols = [i - 1 for i in range(1, M)]
    vals = [math.sqrt(q_value ** (-2 * i) - 1.0) for i in range(1, M)]
    return SparseOperator.from_triplets(M, rows, cols, vals)


# --------------------------------------------------------------------------
# components


class _RepBase:
    n: int
    q: float

    def z(self, j):
        raise NotImplementedError

    def zstar(self, j):
        key = ("zstar", j)
        if key not in self._cache:
            self._cache[key] = self.z(j).adjoint()
        return self._cache[key]

    def Q(self, j):
        return Q_operator(self, j)

    def letter(self, j, starred):
        return self.zstar(j) if starred else self.z(j)


class RepComponent(_RepBase):
    """Truncated component of type k (0..n) with cached generator images.

    ``index`` holds (i_1, ..., i_k) per basis vector in the shared convention,
    ``sample`` the fiber-sample id, ``coords`` the lattice point (t_1..t_n)
    and ``moduli`` the values of |z_1|..|z_n| on each basis vector.
    """

    def __init__(self, k, trunc, samples, builder, index, sample, coords, z_ops, shift_ops, layout):
        self.k = k
        self.trunc = trunc
        self.samples = tuple(samples)
        self.builder = builder
        self.index = index
        self.sample = sample
        self.coords = coords
        self._z = z_ops
        self._S = shift_ops
        self._layout = layout
        self._cache = {}

    n = property(lambda self: self.trunc.n)
    q = property(lambda self: self.trunc.q)
    dim = property(lambda self: self.index.shape[0])

    @property
    def label(self):
        return f"k={self.k}"

    def z(self, j):
        _check_gen(j, self.n)
        return self._z[j - 1]

    def S(self, j):
        """Pure shift part of z_j (weight 1 raising in coordinate j); zero for j > k."""
        _check_gen(j, self.n)
        return self._S[j - 1]

    def absz(self, j):
        _check_gen(j, self.n)
        return SparseOperator.diag(self.moduli[:, j - 1])

    def w(self, j):
        return w_operator(self, j)

    @property
    def moduli(self):
        if "moduli" not in self._cache:
            self._cache["moduli"] = moduli_from_coords(self.coords, self.k, self.q)
        return self._cache["moduli"]

    def interior_mask(self, d=None):
        d = self.trunc.d if d is None else d
        if self.k == 0:
            return np.ones(1, dtype=bool)
        N, M = self.trunc.N, self.trunc.M
        mask = np.ones(self.dim, dtype=bool)
        for j in range(self.k - 1):
            mask &= self.index[:, j] <= N - d
        last = self.index[:, self.k - 1]
        mask &= (last >= -M + d) & (last <= M - d)
        return mask

    def position(self, index, sample):
        """Basis position of given multi-indices (shared convention); -1 if outside."""
        index = np.atleast_2d(np.asarray(index, dtype=np.int64))
        sample = np.asarray(sample, dtype=np.int64)
        return _position(index, sample, self.k, self.trunc.N, self.trunc.M, self._layout)

    def __repr__(self):
        return f"RepComponent({self.builder}, k={self.k}, n={self.n}, q={self.q}, dim={self.dim})"


def _check_gen(j, n):
    if not 1 <= j <= n:
        raise ValueError(f"generator index {j} outside 1..{n}")


def _position(index, sample, k, N, M, layout):
    """Row-major position: sample slowest, then i_1..i_{k-1}, last index fastest.

    ``layout == "abstract"`` orders the last index ascending in i_k; the
    lattice layout orders it ascending in the native exponent e = -i_k.
    """
    if k == 0:
        return np.zeros(len(sample), dtype=np.int64)
    width = 2 * M + 1
    pos = sample.astype(np.int64).copy()
    valid = np.ones(len(sample), dtype=bool)
    for j in range(k - 1):
        i = index[:, j]
        valid &= (i >= 1) & (i <= N)
        pos = pos * N + (i - 1)
    last = index[:, k - 1]
    valid &= np.abs(last) <= M
    digit = last + M if layout == "abstract" else M - last
    pos = pos * width + digit
    return np.where(valid, pos, -1)


def _enumerate(k, N, M, m, layout):
    """Index and sample arrays in basis order."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64), np.zeros(1, dtype=np.int64)
    last = np.arange(-M, M + 1) if layout == "abstract" else -np.arange(-M, M + 1)
    axes = [np.arange(m)] + [np.arange(1, N + 1)] * (k - 1) + [last]
    grids = np.meshgrid(*axes, indexing="ij")
    flat = [g.ravel() for g in grids]
    return np.stack(flat[1:], axis=1).astype(np.int64), flat[0].astype(np.int64)


def moduli_from_coords(coords, k, q):
    """|z_j| on lattice points: chi_{I_q}(t_j) sqrt(t_j^2-1) t_{j+1}..t_k, t_k, then 0."""
    dim, n = coords.shape
    r = np.zeros((dim, n))
    if k == 0:
        return r
    r[:, k - 1] = coords[:, k - 1]
    tail = coords[:, k - 1].copy()
    for j in range(k - 2, -1, -1):
        t = coords[:, j]
        r[:, j] = in_Iq(t, q) * np.sqrt(np.maximum(t * t - 1.0, 0.0)) * tail
        tail = tail * t
    return r


def in_Iq(t, q, rtol=1e-9):
    """Indicator of I_q = {q^{-m} : m >= 1}."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.rint(-np.log(np.where(t > 0, t, np.nan)) / math.log(q))
        ok = (t > 0) & (m >= 1) & (np.abs(t - q ** (-np.nan_to_num(m))) <= rtol * np.abs(t))
    return ok.astype(float)


def _raise_targets(index, sample, j, k, N, M, layout):
    tgt = index.copy()
    tgt[:, j - 1] += 1
    return _position(tgt, sample, k, N, M, layout)


def _shift_op(dim, src_pos_targets, weights):
    valid = src_pos_targets >= 0
    cols = np.flatnonzero(valid)
    return SparseOperator.from_triplets(dim, src_pos_targets[valid], cols, weights[valid])


def _make_component(k, trunc, samples, builder, layout, weight_fn):
    n, N, M, q = trunc.n, trunc.N, trunc.M, trunc.q
    if not 0 <= k <= n:
        raise ValueError(f"component index k={k} outside 0..{n}")
    m = len(samples) if k > 0 else 1
    index, sample = _enumerate(k, N, M, m, layout)
    dim = index.shape[0]
    coords = np.zeros((dim, n))
    if k > 0:
        a = np.asarray(samples)[sample]
        for j in range(k - 1):
            coords[:, j] = q ** (-index[:, j].astype(float))
        if layout == "abstract":
            coords[:, k - 1] = a * q ** (-index[:, k - 1].astype(float))
        else:
            native_e = -index[:, k - 1]
            coords[:, k - 1] = a * q ** native_e.astype(float)
    z_ops, s_ops = [], []
    for j in range(1, n + 1):
        if j > k:
            z_ops.append(SparseOperator.zeros(dim))
            s_ops.append(SparseOperator.zeros(dim))
            continue
        targets = _raise_targets(index, sample, j, k, N, M, layout)
        z_ops.append(_shift_op(dim, targets, weight_fn(j, index, sample, coords, targets)))
        s_ops.append(_shift_op(dim, targets, np.ones(dim)))
    return RepComponent(k, trunc, samples if k > 0 else (), builder, index, sample, coords, z_ops, s_ops, layout)


def build_component_abstract(k: int, trunc: TruncationSpec, A: FiberSpectrum) -> RepComponent:
    """Component k from the weighted-shift formulas in index form.

    z_k h_{..,i_k} = q^{-i_k} a h_{..,i_k+1};
    z_j h = sqrt(q^{-2 i_j} - 1) q^{-(i_{j+1}+...+i_k)} a h_{..,i_j+1,..}  (j < k).
    """
    A.validate(trunc.q)
    q = trunc.q
    a_vals = np.asarray(A.samples)

    def weights(j, index, sample, coords, targets):
        a = a_vals[sample]
        if j == k:
            return q ** (-index[:, k - 1].astype(float)) * a
        i_j = index[:, j - 1].astype(float)
        tail = index[:, j:k].sum(axis=1).astype(float)
        return np.sqrt(q ** (-2.0 * i_j) - 1.0) * q ** (-tail) * a

    return _make_component(k, trunc, A.samples, "abstract", "abstract", weights)


def build_component_lattice(k: int, trunc: TruncationSpec, measure: MeasureSpec) -> RepComponent:
    """Component k as multiplication/shift operators on an atomic L2 space.

    (z_k h)(t) = q t_k h(t_1, .., q t_k),
    (z_j h)(t) = sqrt((q t_j)^2 - 1) t_{j+1}..t_k h(.., q t_j, ..),
    in the orthonormal basis of normalized atom indicators. Entries are the
    multiplier evaluated at the image atom, times sqrt(w_image / w_source).
    """
    measure.validate(trunc.q)
    q = trunc.q
    w_atom = np.asarray(measure.weights)

    def weights(j, index, sample, coords, targets):
        valid = targets >= 0
        t = np.zeros_like(coords)
        t[valid] = coords[targets[valid]]
        w_src = w_atom[sample]
        w_img = np.where(valid, w_atom[sample[np.where(valid, targets, 0)]], w_src)
        ratio = np.sqrt(w_img / w_src)
        if j == k:
            return q * t[:, k - 1] * ratio
        mult = np.sqrt(np.maximum((q * t[:, j - 1]) ** 2 - 1.0, 0.0))
        for m in range(j, k):
            mult = mult * t[:, m]
        return mult * ratio

    return _make_component(k, trunc, measure.samples, "lattice", "lattice", weights)


def build_all_components(trunc: TruncationSpec, A: FiberSpectrum, builder="abstract"):
    if builder == "abstract":
        return [build_component_abstract(k, trunc, A) for k in range(trunc.n + 1)]
    measure = MeasureSpec(A.samples)
    return [build_component_lattice(k, trunc, measure) for k in range(trunc.n + 1)]


def basis_permutation(src: RepComponent, dst: RepComponent) -> np.ndarray:
    """perm with perm[p] = position in ``dst`` of basis vector p of ``src``."""
    if (src.k, src.trunc) != (dst.k, dst.trunc):
        raise ValueError("components differ in type or truncation")
    perm = dst.position(src.index, src.sample)
    if np.any(perm < 0) or len(set(perm.tolist())) != src.dim:
        raise ValueError("index sets do not match")
    return perm


# --------------------------------------------------------------------------
# derived operators


def Q_operator(rep, j: int) -> SparseOperator:
    """Q_j = sum_{m >= j} z_m* z_m, composed sparsely; must come out diagonal."""
    _check_gen(j, rep.n)
    key = ("Q", j)
    if key not in rep._cache:
        acc = SparseOperator.zeros(rep.dim)
        for m in range(j, rep.n + 1):
            acc = acc + rep.zstar(m) @ rep.z(m)
        if not acc.is_diagonal():
            raise RuntimeError(f"Q_{j} is not diagonal (off-diagonal max {acc.off_diagonal_max():.3g})")
        rep._cache[key] = acc
    return rep._cache[key]


def spectral_projection(rep, j: int, interval, rtol: float = 1e-12) -> SparseOperator:
    """E_j((lo, hi]): diagonal 0/1 selecting basis vectors with Q_j in (lo, hi].

    Endpoints are widened by a relative ``rtol`` upwards so that values sitting
    exactly on the closed right end survive rounding.
    """
    lo, hi = interval
    v = Q_operator(rep, j).diagonal().real
    sel = (v > lo * (1 + rtol)) & (v <= hi * (1 + rtol))
    return SparseOperator.diag(sel.astype(float))


def stratum_interval(q: float, total: int):
    """(q^{-2 total + 2}, q^{-2 total}]."""
    return (q ** (-2 * total + 2), q ** (-2 * total))


def stratum_projection(rep, indices: dict) -> SparseOperator:
    """Product of E_m projections isolating fixed (i_j, ..., i_k).

    ``indices`` maps m -> i_m for a contiguous tail j..k of a component of type k.
    """
    ms = sorted(indices)
    if not ms:
        return SparseOperator.identity(rep.dim)
    acc = None
    for m in ms:
        total = sum(indices[x] for x in ms if x >= m)
        P = spectral_projection(rep, m, stratum_interval(rep.q, total))
        acc = P if acc is None else acc @ P
    return acc


def inv_sqrt_Q(rep, j: int) -> SparseOperator:
    """Q_j^{-1/2} on the rows where Q_j > 0; truncated rows (Q_j = 0 only at the window edge) map to 0."""
    d = Q_operator(rep, j).diagonal().real
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return SparseOperator.diag(out)


def w_operator(rep, j: int) -> SparseOperator:
    """w_j = Q_{j+1}^{-1/2} z_j, defined for j < k on a component of type k."""
    k = getattr(rep, "k", None)
    if k is None:
        raise TypeError("w_operator needs a single component")
    if not 1 <= j < k:
        raise DomainError(f"w_{j} needs Q_{j + 1} > 0, which fails on a component of type k={k}")
    key = ("w", j)
    if key not in rep._cache:
        rep._cache[key] = inv_sqrt_Q(rep, j + 1) @ rep.z(j)
    return rep._cache[key]


def w_relation_residual(rep, j: int, d=None) -> float:
    """Interior residual of w w* - q^2 w* w + (1 - q^2) = 0 for w = w_j."""
    w = w_operator(rep, j)
    q = rep.q
    terms = [(1.0, w @ w.adjoint()), (-q * q, w.adjoint() @ w), (1.0 - q * q, SparseOperator.identity(rep.dim))]
    return relation_residual(terms, rep.interior_mask(d))


# --------------------------------------------------------------------------
# relation checks


def _indicator(lo, hi):
    return lambda x: ((x > lo) & (x <= hi)).astype(float)


DEFAULT_F_FAMILY = (
    ("chi(0.37,5.3]", _indicator(0.37, 5.3)),
    ("chi(1.9,47.1]", _indicator(1.9, 47.1)),
    ("1/(1+x)", lambda x: 1.0 / (1.0 + x)),
    ("x/(1+x^2)", lambda x: x / (1.0 + x * x)),
)


@dataclass
class RelationReport:
    component: str
    records: list = field(default_factory=list)
    tolerance: float = 1e-10

    @property
    def max_residual(self):
        return max((r["max_residual"] for r in self.records), default=0.0)

    @property
    def passed(self):
        return all(r["max_residual"] <= self.tolerance for r in self.records)

    def failures(self):
        return [r for r in self.records if r["max_residual"] > self.tolerance]

    def json_lines(self):
        return [json.dumps(r, sort_keys=True) for r in self.records]


def relation_residual(terms, mask):
    """Max over masked basis vectors e of |sum c T e| / max(1, sum |c| |T e|)."""
    if not mask.any():
        return 0.0
    acc = None
    scale = np.zeros(len(mask))
    for c, T in terms:
        acc = c * T if acc is None else acc + c * T
        scale += abs(c) * T.column_norms()
    num = acc.column_norms()
    res = num[mask] / np.maximum(1.0, scale[mask])
    return float(res.max())


def relation_terms(rep, f_family=DEFAULT_F_FAMILY):
    """(name, [(coef, operator), ...]) for every defining relation instance."""
    n, q = rep.n, rep.q
    z, zs = rep.z, rep.zstar
    out = []
    for j in range(1, n + 1):
        for i in range(1, j):
            out.append((f"R1[z{j}z{i}]", [(1.0, z(j) @ z(i)), (-q, z(i) @ z(j))]))
    for j in range(1, n + 1):
        for i in range(1, n + 1):
            if i != j:
                out.append((f"R1[z{j}z{i}#]", [(1.0, z(j) @ zs(i)), (-q, zs(i) @ z(j))]))
    for i in range(1, n):
        terms = [(1.0, z(i) @ zs(i)), (-q * q, zs(i) @ z(i))]
        terms += [(1.0 - q * q, zs(m) @ z(m)) for m in range(i + 1, n + 1)]
        out.append((f"R2[z{i}z{i}#]", terms))
    out.append((f"R2[z{n}z{n}#]", [(1.0, z(n) @ zs(n)), (-q * q, zs(n) @ z(n))]))
    for kk in range(1, n + 1):
        qd = rep.Q(kk).diagonal().real
        for fname, f in f_family:
            fQ = SparseOperator.diag(f(qd))
            for j in range(1, n + 1):
                if j < kk:
                    right, right_s = fQ, fQ
                else:
                    right = SparseOperator.diag(f(qd / (q * q)))
                    right_s = SparseOperator.diag(f(q * q * qd))
                out.append((f"fQ[{fname};Q{kk};z{j}]", [(1.0, fQ @ z(j)), (-1.0, z(j) @ right)]))
                out.append((f"fQ[{fname};Q{kk};z{j}#]", [(1.0, fQ @ zs(j)), (-1.0, zs(j) @ right_s)]))
    return out


def verify_relations(rep, tolerance: float = 1e-10, d=None, f_family=DEFAULT_F_FAMILY) -> RelationReport:
    """Apply every defining relation and f(Q_k) commutation to all interior basis vectors."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    mask = rep.interior_mask(d)
    report = RelationReport(rep.label, tolerance=tolerance)
    for name, terms in relation_terms(rep, f_family):
        report.records.append(
            {
                "relation": name,
                "component": rep.label,
                "max_residual": relation_residual(terms, mask),
                "interior_size": int(mask.sum()),
            }
        )
    return report


# --------------------------------------------------------------------------
# direct sums and polynomial images


class RepSum(_RepBase):
    """Orthogonal sum of components sharing n and q; operators are block diagonal."""

    def __init__(self, components: Sequence[RepComponent]):
        components = list(components)
        if not components:
            raise ValueError("empty direct sum")
        n, q = components[0].n, components[0].q
        if any(c.n != n or c.q != q for c in components):
            raise ValueError("components must share n and q")
        self.components = components
        self.trunc = components[0].trunc
        dims = [c.dim for c in components]
        self.offsets = np.concatenate([[0], np.cumsum(dims)])
        self._cache = {}

    n = property(lambda self: self.components[0].n)
    q = property(lambda self: self.components[0].q)
    dim = property(lambda self: int(self.offsets[-1]))

    @property
    def label(self):
        return "sum(" + ",".join(str(c.k) for c in self.components) + ")"

    def z(self, j):
        key = ("z", j)
        if key not in self._cache:
            self._cache[key] = block_diag(c.z(j) for c in self.components)
        return self._cache[key]

    def S(self, j):
        return block_diag(c.S(j) for c in self.components)

    def interior_mask(self, d=None):
        return np.concatenate([c.interior_mask(d) for c in self.components])

    def block(self, i):
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def component_labels(self):
        return np.concatenate([np.full(c.dim, c.k) for c in self.components])


def direct_sum(reps) -> RepSum:
    return RepSum(reps)


def polynomial_operator(rep, p) -> SparseOperator:
    """Image of a QPolynomial under the representation (q substituted numerically)."""
    from .qalgebra import evaluate_at_q

    if p.n != rep.n:
        raise ValueError("polynomial and representation differ in n")
    num = evaluate_at_q(p, rep.q)
    acc = SparseOperator.zeros(rep.dim)
    for word, c in num.items():
        op = SparseOperator.identity(rep.dim)
        for j, s in word:
            op = op @ rep.letter(j, s)
        acc = acc + c * op
    return acc
