import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qplane.opkernel import (
    NonHermitianError,
    SparseOperator,
    adjoint,
    block_diag,
    compose,
    hermitian_spectrum,
    operator_norm_lb,
    power_history,
    read_matrix_market,
    write_matrix_market,
)
from qplane.qrep import FiberSpectrum, TruncationSpec, build_component_abstract, build_qhyp, stratum_projection, Q_operator


def random_sparse(dim, density, seed):
    rng = np.random.default_rng(seed)
    m = sp.random(dim, dim, density=density, random_state=rng, format="csr")
    m = m + 1j * sp.random(dim, dim, density=density, random_state=rng, format="csr")
    return SparseOperator(m)


def test_no_stored_zeros():
    A = SparseOperator.from_entries(3, {(0, 0): 1.0, (1, 2): 0.0, (2, 1): 2j})
    assert A.nnz == 2
    assert A.entries == {(0, 0): 1.0, (2, 1): 2j}


def test_adjoint_of_real_diagonal():
    D = SparseOperator.diag([1.0, -2.0, 3.5])
    assert D.adjoint().entries == D.entries


def test_identity_compose():
    A = random_sparse(15, 0.2, 1)
    assert compose(SparseOperator.identity(15), A).entries == A.entries
    assert adjoint(adjoint(A)).entries == A.entries


@pytest.mark.parametrize("seed", range(5))
def test_adjoint_of_product_dense_oracle(seed):
    A, B = random_sparse(20, 0.15, seed), random_sparse(20, 0.15, seed + 100)
    lhs = (A @ B).adjoint().to_dense()
    rhs = (B.adjoint() @ A.adjoint()).to_dense()
    assert np.abs(lhs - rhs).max() <= 1e-14
    assert np.abs(lhs - (A.to_dense() @ B.to_dense()).conj().T).max() <= 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(0, 10_000))
def test_algebra_matches_dense(dim, seed):
    A, B = random_sparse(dim, 0.1, seed), random_sparse(dim, 0.1, seed + 1)
    dA, dB = A.to_dense(), B.to_dense()
    assert np.allclose((A @ B).to_dense(), dA @ dB, atol=1e-13)
    assert np.allclose((A + B).to_dense(), dA + dB, atol=0)
    assert np.allclose((A - 2.5 * B).to_dense(), dA - 2.5 * dB, atol=1e-15)
    assert np.allclose(A.adjoint().to_dense(), dA.conj().T, atol=0)
    x = np.random.default_rng(seed).standard_normal(dim) + 0j
    assert np.allclose(A.matvec(x), dA @ x, atol=1e-13)
    assert np.allclose(A.rmatvec(x), dA.conj().T @ x, atol=1e-13)
    assert np.allclose(A.column_norms(), np.linalg.norm(dA, axis=0), atol=1e-13)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        SparseOperator.identity(3) @ SparseOperator.identity(4)
    with pytest.raises(ValueError):
        SparseOperator.identity(3) + SparseOperator.identity(4)
    with pytest.raises(ValueError):
        SparseOperator(np.zeros((2, 3)))


def test_block_diag():
    A, B = SparseOperator.diag([1, 2]), SparseOperator.diag([3])
    assert block_diag([A, B]).entries == {(0, 0): 1, (1, 1): 2, (2, 2): 3}


def test_allclose_relative():
    A = SparseOperator.diag([1e20, 1.0])
    B = SparseOperator.diag([1e20 * (1 + 1e-14), 1.0])
    assert A.allclose(B, rtol=1e-12, atol=0)
    assert not A.allclose(B, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- spectra


def test_spectrum_examples():
    assert list(hermitian_spectrum(SparseOperator.diag([9, 1, 4]))) == [1, 4, 9]
    swap = SparseOperator(np.array([[0, 1], [1, 0]]))
    assert np.allclose(hermitian_spectrum(swap), [-1, 1])


def test_spectrum_of_Q_on_single_stratum():
    rep = build_component_abstract(1, TruncationSpec(1, 0.5, 4, 4, 1), FiberSpectrum((0.75,)))
    P = stratum_projection(rep, {1: 1})
    block = P @ Q_operator(rep, 1) @ P
    vals = hermitian_spectrum(block)
    nonzero = vals[np.abs(vals) > 0]
    assert nonzero.tolist() == [pytest.approx(2.25, rel=1e-14)]


def test_spectrum_rejects_non_hermitian():
    with pytest.raises(NonHermitianError):
        hermitian_spectrum(SparseOperator(np.array([[0, 1], [0, 0]])))


@pytest.mark.parametrize("seed", range(4))
def test_spectrum_dense_oracle_and_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    A = random_sparse(40, 0.05, seed)
    H = A + A.adjoint()
    vals = hermitian_spectrum(H)
    assert np.allclose(vals, np.linalg.eigvalsh(H.to_dense()), atol=1e-12)
    perm = rng.permutation(40)
    P = SparseOperator(sp.csr_matrix((np.ones(40), (np.arange(40), perm)), shape=(40, 40)))
    assert np.allclose(hermitian_spectrum(P @ H @ P.adjoint()), vals, atol=1e-12)


# ---------------------------------------------------------------- norms


def test_norm_of_multiplication_operator():
    assert operator_norm_lb(SparseOperator.diag([0.1, 0.5, 0.3])) == 0.5


@pytest.mark.parametrize("M", [3, 6, 12])
def test_norm_of_truncated_isometry(M):
    S = SparseOperator(sp.diags(np.ones(M - 1), -1, format="csr"))
    assert abs(operator_norm_lb(S, 50) - 1.0) <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_norm_dense_svd_oracle(seed):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    exact = np.linalg.svd(dense, compute_uv=False)[0]
    est = operator_norm_lb(SparseOperator(dense), 500, seed=seed)
    assert est <= exact * (1 + 1e-12)
    assert abs(est - exact) / exact <= 1e-8


def test_power_history_monotone_and_seeded():
    A = random_sparse(50, 0.1, 7)
    h1, _ = power_history(A, 60, seed=3)
    h2, _ = power_history(A, 60, seed=3)
    assert np.array_equal(h1, h2)
    assert np.all(np.diff(h1) >= -1e-12 * h1[-1])


def test_norm_errors():
    with pytest.raises(ValueError):
        operator_norm_lb(SparseOperator.identity(2), 0)
    with pytest.raises(ValueError):
        operator_norm_lb(SparseOperator.zeros(0))


def test_qhyp_norm_is_largest_weight():
    # the truncated weighted shift has norm = its largest weight
    W = build_qhyp(6, 0.5)
    assert operator_norm_lb(W, 200) == pytest.approx(np.sqrt(0.5 ** -10 - 1), rel=1e-12)


# ---------------------------------------------------------------- Matrix Market


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_matrix_market_round_trip_is_bit_exact(dim, seed):
    rng = np.random.default_rng(seed)
    A = random_sparse(dim, 0.2, seed) * complex(rng.standard_normal(), rng.standard_normal()) * 10.0 ** rng.integers(-20, 20)
    buf = io.BytesIO()
    write_matrix_market(A, buf)
    buf.seek(0)
    B = read_matrix_market(buf)
    assert B.entries == A.entries


def test_matrix_market_file(tmp_path):
    A = SparseOperator.from_entries(3, {(0, 1): 1 / 3, (2, 2): -1e-300 + 7j})
    path = tmp_path / "a.mtx"
    write_matrix_market(A, str(path), comment="demo")
    assert read_matrix_market(str(path)).entries == A.entries
    assert path.read_text().startswith("%%MatrixMarket matrix coordinate complex general")
