import math

import numpy as np
import pytest
import scipy.sparse as sp

from qplane.opkernel import SparseOperator
from qplane.qalgebra import identity_suite
from qplane.qrep import (
    DomainError,
    FiberSpectrum,
    MeasureSpec,
    Q_operator,
    TruncationSpec,
    basis_permutation,
    build_component_abstract,
    build_component_lattice,
    build_qhyp,
    build_qnormal,
    direct_sum,
    inv_sqrt_Q,
    polynomial_operator,
    relation_residual,
    spectral_projection,
    stratum_interval,
    stratum_projection,
    verify_relations,
    w_operator,
    w_relation_residual,
)

from conftest import abstract_rep, lattice_rep

ONE = FiberSpectrum((1.0,))


def col(op, p):
    """Column p of an operator as {row: value}."""
    c = op.csr[:, p].tocoo()
    return {int(r): complex(v) for r, v in zip(c.row, c.data)}


# ---------------------------------------------------------------- parameter types


@pytest.mark.parametrize(
    "kwargs",
    [dict(q=0.0), dict(q=1.0), dict(N=1), dict(M=0), dict(d=8), dict(d=-1), dict(n=0)],
)
def test_truncation_spec_rejects(kwargs):
    base = dict(n=2, q=0.5, N=8, M=8, d=3)
    base.update(kwargs)
    with pytest.raises(ValueError):
        TruncationSpec(**base)


def test_fiber_spectrum_excludes_q():
    with pytest.raises(ValueError):
        FiberSpectrum((0.5,)).validate(0.5)
    with pytest.raises(ValueError):
        FiberSpectrum((1.01,)).validate(0.5)
    assert FiberSpectrum.filtered((0.6, 0.9, 1.0), 0.9).samples == (1.0,)
    with pytest.raises(ValueError):
        FiberSpectrum.filtered((0.1,), 0.5)


def test_measure_spec_weights():
    assert MeasureSpec((0.7, 1.0)).weights == (1.0, 1.0)
    with pytest.raises(ValueError):
        MeasureSpec((0.7,), (0.0,))
    with pytest.raises(ValueError):
        MeasureSpec((0.7, 1.0), (1.0,))


# ---------------------------------------------------------------- 1-d building blocks


def test_qnormal_weights():
    M = 3
    z = build_qnormal(FiberSpectrum((0.75,)), M, 0.5)
    h0 = M  # position of i = 0
    assert col(z, h0) == {h0 + 1: pytest.approx(0.75)}
    zz_star = (z @ z.adjoint()).diagonal()[h0].real
    z_star_z = (z.adjoint() @ z).diagonal()[h0].real
    assert z_star_z == pytest.approx(0.5625, rel=1e-15)
    assert zz_star == pytest.approx(0.140625, rel=1e-15)
    assert zz_star == pytest.approx(0.25 * z_star_z, rel=1e-15)


def test_qnormal_has_no_kernel_inside_window():
    z = build_qnormal(FiberSpectrum((0.6, 1.0)), 4, 0.5)
    norms = z.column_norms()
    width = 9
    for s in range(2):
        inside = norms[s * width : s * width + width - 1]
        assert np.all(inside > 0)
        assert norms[s * width + width - 1] == 0  # raising out of the window


def test_qhyp():
    w = build_qhyp(6, 0.5)
    assert col(w, 0) == {1: pytest.approx(math.sqrt(3.0), rel=1e-15)}
    for q in (0.3, 0.5, 0.9):
        w = build_qhyp(8, q)
        assert (w.adjoint() @ w).diagonal()[0].real == pytest.approx(q ** -2 - 1, rel=1e-14)
        lhs = (w @ w.adjoint() - q * q * (w.adjoint() @ w)).to_dense()
        for i in range(2, 8):  # h_i at position i-1
            e = np.zeros(8)
            e[i - 1] = 1
            assert np.allclose(lhs @ e, -(1 - q * q) * e, atol=1e-12 * max(1, q ** (-2 * i)))
    with pytest.raises(ValueError):
        build_qhyp(1, 0.5)


# ---------------------------------------------------------------- components


def test_component_k1_is_qnormal():
    A = FiberSpectrum((0.6, 0.9, 1.0))
    rep = build_component_abstract(1, TruncationSpec(1, 0.5, 8, 5, 2), A)
    assert rep.z(1).entries == build_qnormal(A, 5, 0.5).entries


def test_component_k2_weights():
    rep = build_component_abstract(2, TruncationSpec(2, 0.5, 8, 8, 3), ONE)
    src = rep.position([[1, 0]], [0])[0]
    assert col(rep.z(1), src) == {rep.position([[2, 0]], [0])[0]: pytest.approx(math.sqrt(3.0), rel=1e-15)}
    assert col(rep.z(2), src) == {rep.position([[1, 1]], [0])[0]: pytest.approx(1.0, rel=1e-15)}


def test_higher_generators_vanish():
    rep = abstract_rep(2, 4, 0.5)
    assert rep.z(3).nnz == 0 and rep.z(4).nnz == 0
    rep0 = abstract_rep(0, 3, 0.5)
    assert rep0.dim == 1
    assert all(rep0.z(j).nnz == 0 for j in (1, 2, 3))


def test_bad_component_index():
    with pytest.raises(ValueError):
        build_component_abstract(3, TruncationSpec(2, 0.5), ONE)
    with pytest.raises(ValueError):
        abstract_rep(1, 2, 0.5).z(3)


def test_lattice_entry_on_atoms():
    q = 0.5
    rep = build_component_lattice(1, TruncationSpec(1, q, 4, 4, 1), MeasureSpec((1.0,)))
    t = rep.coords[:, 0]
    at_s = int(np.flatnonzero(np.isclose(t, 1.0))[0])
    at_qs = int(np.flatnonzero(np.isclose(t, q))[0])
    assert col(rep.z(1), at_qs) == {at_s: pytest.approx(q * 1.0, rel=1e-15)}


def test_lattice_kernel_edge():
    # the z_1 weight at t_1 = q^{-1} is sqrt((q t_1)^2 - 1) = 0: nothing lands on the bottom row
    rep = build_component_lattice(2, TruncationSpec(2, 0.5, 6, 4, 1), MeasureSpec((1.0,)))
    bottom = np.flatnonzero(rep.index[:, 0] == 1)
    dense = rep.z(1).to_dense()
    assert np.all(dense[bottom, :] == 0)
    assert np.all(rep.z(1).adjoint().to_dense()[:, bottom] == 0)


@pytest.mark.parametrize("q", [0.3, 0.5, 0.9])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_builders_agree_under_relabeling(q, n):
    for k in range(n + 1):
        a, b = abstract_rep(k, n, q), lattice_rep(k, n, q)
        perm = basis_permutation(b, a)
        P = SparseOperator(sp.csr_matrix((np.ones(b.dim), (perm, np.arange(b.dim))), shape=(a.dim, b.dim)))
        for j in range(1, n + 1):
            assert a.z(j).allclose(P @ b.z(j) @ P.adjoint(), rtol=1e-12, atol=0)


def test_lattice_invariant_under_orbit_weights():
    tr = TruncationSpec(2, 0.5, 6, 6, 2)
    u = build_component_lattice(2, tr, MeasureSpec((0.7, 1.0)))
    w = build_component_lattice(2, tr, MeasureSpec((0.7, 1.0), (1.0, 9.0)))
    for j in (1, 2):
        assert u.z(j).allclose(w.z(j), rtol=1e-15, atol=0)


@pytest.mark.parametrize("builder", [abstract_rep, lattice_rep])
def test_polar_decomposition(builder):
    rep = builder(3, 3, 0.5)
    mask = rep.interior_mask()
    for j in (1, 2, 3):
        zsz = (rep.zstar(j) @ rep.z(j)).diagonal().real
        assert np.allclose(zsz[mask], rep.moduli[mask, j - 1] ** 2, rtol=1e-12, atol=0)
        diff = (rep.z(j) - rep.S(j) @ rep.absz(j)).csr[:, np.flatnonzero(mask)]
        scale = np.abs(rep.z(j).csr.data).max()
        assert diff.nnz == 0 or np.abs(diff.data).max() <= 1e-12 * scale


# ---------------------------------------------------------------- Q_j and projections


def test_Q_examples():
    rep = build_component_abstract(1, TruncationSpec(1, 0.5, 8, 8, 3), FiberSpectrum((0.75,)))
    p = rep.position([[2]], [0])[0]
    assert Q_operator(rep, 1).diagonal()[p].real == pytest.approx(9.0, rel=1e-14)
    rep2 = build_component_abstract(2, TruncationSpec(2, 0.5, 8, 8, 3), ONE)
    p = rep2.position([[1, 1]], [0])[0]
    assert Q_operator(rep2, 1).diagonal()[p].real == pytest.approx(16.0, rel=1e-14)
    assert Q_operator(abstract_rep(1, 3, 0.5), 2).nnz == 0


@pytest.mark.parametrize("q", [0.3, 0.9])
def test_Q_diagonal_formula_and_commuting(q):
    rep = abstract_rep(3, 3, q)
    mask = rep.interior_mask()
    a = np.asarray(rep.samples)[rep.sample]
    Qs = [Q_operator(rep, j) for j in (1, 2, 3)]
    for j, Qj in enumerate(Qs, start=1):
        assert Qj.is_diagonal()
        expect = q ** (-2.0 * rep.index[:, j - 1 :].sum(axis=1)) * a * a
        assert np.allclose(Qj.diagonal().real[mask], expect[mask], rtol=1e-12, atol=0)
    for A in Qs:
        for B in Qs:
            assert (A @ B - B @ A).nnz == 0


def test_projection_selects_ground_stratum():
    q = 0.5
    rep = build_component_abstract(1, TruncationSpec(1, q, 6, 6, 2), FiberSpectrum((0.75,)))
    P = spectral_projection(rep, 1, (q * q, 1.0)).diagonal().real
    assert np.flatnonzero(P).tolist() == np.flatnonzero(rep.index[:, 0] == 0).tolist()


def test_projection_full_line_is_identity_on_interior():
    rep = abstract_rep(2, 2, 0.5)
    mask = rep.interior_mask()
    for j in (1, 2):
        P = spectral_projection(rep, j, (0.0, np.inf)).diagonal().real
        assert np.all(P[mask] == 1)


def test_stratum_block_rank_equals_sample_count():
    rep = abstract_rep(3, 3, 0.5)
    P = stratum_projection(rep, {1: 2, 2: 3, 3: -1}).diagonal().real
    sel = np.flatnonzero(P)
    assert len(sel) == len(rep.samples)
    assert np.all(rep.index[sel] == [2, 3, -1])


def test_stratum_spectrum_inside_interval():
    q = 0.5
    rep = abstract_rep(2, 2, q)
    Q2 = Q_operator(rep, 2).diagonal().real
    mask = rep.interior_mask()
    for i2 in range(-3, 4):
        lo, hi = stratum_interval(q, i2)
        sel = mask & (rep.index[:, 1] == i2)
        assert np.all((Q2[sel] > lo) & (Q2[sel] <= hi * (1 + 1e-12)))


def test_kernel_of_Q_on_direct_sum():
    reps = [abstract_rep(k, 3, 0.5) for k in range(4)]
    total = direct_sum(reps)
    mask = total.interior_mask()
    labels = total.component_labels()
    for kk in range(1, 4):
        Qd = np.concatenate([Q_operator(r, kk).diagonal().real for r in reps])
        assert np.all(Qd[labels < kk] == 0)
        assert np.all(Qd[(labels >= kk) & mask] > 0)


# ---------------------------------------------------------------- w_j


def test_w_value():
    rep = build_component_abstract(2, TruncationSpec(2, 0.5, 8, 8, 3), ONE)
    src = rep.position([[1, 0]], [0])[0]
    dst = rep.position([[2, 0]], [0])[0]
    assert col(w_operator(rep, 1), src) == {dst: pytest.approx(math.sqrt(3.0), rel=1e-14)}


@pytest.mark.parametrize("builder", [abstract_rep, lattice_rep])
@pytest.mark.parametrize("q", [0.3, 0.5, 0.9])
def test_w_relation_and_commutation(builder, q):
    rep = builder(3, 3, q)
    mask = rep.interior_mask()
    for j in (1, 2):
        assert w_relation_residual(rep, j) <= 1e-10
    R = inv_sqrt_Q(rep, 2)
    assert relation_residual([(1.0, R @ rep.z(1)), (-1.0, rep.z(1) @ R)], mask) <= 1e-12


def test_w_domain():
    rep = abstract_rep(2, 3, 0.5)
    with pytest.raises(DomainError):
        w_operator(rep, 2)
    with pytest.raises(DomainError):
        w_operator(rep, 0)


# ---------------------------------------------------------------- relations


@pytest.mark.parametrize("builder", [abstract_rep, lattice_rep])
def test_relations_on_interior(builder):
    for k in range(3):
        rep = builder(k, 2, 0.5)
        report = verify_relations(rep, 1e-10)
        assert report.passed, report.failures()[:3]


def test_relation_names_and_records():
    report = verify_relations(abstract_rep(2, 2, 0.5))
    names = {r["relation"] for r in report.records}
    assert {"R1[z2z1]", "R1[z1z2#]", "R1[z2z1#]", "R2[z1z1#]", "R2[z2z2#]"} <= names
    assert all(set(r) == {"relation", "component", "max_residual", "interior_size"} for r in report.records)
    assert report.json_lines()[0].startswith("{")


def test_zero_component_is_trivial():
    report = verify_relations(abstract_rep(0, 3, 0.5))
    assert report.max_residual == 0.0


def test_boundary_failure_without_margin():
    rep = abstract_rep(2, 2, 0.5)
    report = verify_relations(rep, 1e-10, d=0)
    assert not report.passed
    assert report.max_residual > 0.1
    assert {r["relation"] for r in report.failures()} >= {"R2[z1z1#]", "R2[z2z2#]"}


def test_verify_relations_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        verify_relations(abstract_rep(1, 1, 0.5), 0.0)


def test_direct_sum():
    reps = [abstract_rep(k, 2, 0.5) for k in range(3)]
    total = direct_sum(reps)
    assert total.dim == sum(r.dim for r in reps)
    for j in (1, 2):
        Qsum = Q_operator(total, j).diagonal()
        assert np.array_equal(Qsum, np.concatenate([Q_operator(r, j).diagonal() for r in reps]))
    assert verify_relations(total).passed == all(verify_relations(r).passed for r in reps)
    bad = verify_relations(total, d=0)
    assert not bad.passed
    with pytest.raises(ValueError):
        direct_sum([abstract_rep(1, 2, 0.5), abstract_rep(1, 2, 0.3)])


def test_identities_annihilate_interior():
    # images of algebra identities (degree <= 1 in Q) vanish on interior vectors
    for n in (2, 3):
        reps = [abstract_rep(k, n, 0.5) for k in range(1, n + 1)]
        for name, lhs, rhs in identity_suite(n, 1):
            for rep in reps:
                L, R = polynomial_operator(rep, lhs), polynomial_operator(rep, rhs)
                assert relation_residual([(1.0, L), (-1.0, R)], rep.interior_mask()) <= 1e-10, (name, rep.label)


def test_non_identity_is_visible():
    from qplane.qalgebra import parse_expr

    rep = abstract_rep(2, 2, 0.5)
    L = polynomial_operator(rep, parse_expr("z2*z1", 2))
    R = polynomial_operator(rep, parse_expr("z1*z2", 2))
    assert relation_residual([(1.0, L), (-1.0, R)], rep.interior_mask()) > 0.1
