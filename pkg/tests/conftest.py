import functools
import sys

import numpy as np
from hypothesis import strategies as st

from qplane.qalgebra import LaurentQ, QPolynomial
from qplane.qrep import (
    FiberSpectrum,
    MeasureSpec,
    TruncationSpec,
    build_component_abstract,
    build_component_lattice,
)

SAMPLES = (0.6, 0.9, 1.0)


@functools.lru_cache(maxsize=None)
def abstract_rep(k, n, q, N=8, M=8, d=3, samples=SAMPLES):
    return build_component_abstract(k, TruncationSpec(n, q, N, M, d), FiberSpectrum.filtered(samples, q))


@functools.lru_cache(maxsize=None)
def lattice_rep(k, n, q, N=8, M=8, d=3, samples=SAMPLES):
    kept = FiberSpectrum.filtered(samples, q).samples
    return build_component_lattice(k, TruncationSpec(n, q, N, M, d), MeasureSpec(kept))


def letters(n):
    return st.tuples(st.integers(1, n), st.booleans())


def words(n, max_len):
    return st.lists(letters(n), max_size=max_len).map(tuple)


laurent = st.dictionaries(
    st.integers(-3, 3), st.fractions(min_value=-5, max_value=5, max_denominator=4), max_size=3
).map(LaurentQ)


def polys(n, max_terms=3, max_len=3):
    return st.lists(st.tuples(words(n, max_len), laurent), min_size=1, max_size=max_terms).map(
        lambda items: _sum_poly(n, items)
    )


def _sum_poly(n, items):
    acc = QPolynomial.zero(n)
    for w, c in items:
        acc = acc + QPolynomial(n, {w: c})
    return acc


def dense_close(a, b, atol=1e-12):
    return np.allclose(np.asarray(a), np.asarray(b), rtol=0, atol=atol)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
