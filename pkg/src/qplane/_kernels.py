"""Hot numeric loops: CSR mat-vecs and power iteration.

Each kernel has a numba ``@njit`` implementation and a pure-numpy twin. The
numba path is used when numba imports and ``QPLANE_DISABLE_NUMBA`` is unset
(or "0"); set it to "1" to force the numpy path.
"""

import os

import numpy as np

__all__ = ["USE_NUMBA", "csr_matvec", "csr_rmatvec", "power_iteration", "csr_col_norms", "backend"]


def _numpy_csr_matvec(indptr, indices, data, x):
    nrows = indptr.shape[0] - 1
    rows = np.repeat(np.arange(nrows), np.diff(indptr))
    out = np.zeros(nrows, dtype=np.complex128)
    np.add.at(out, rows, data * x[indices])
    return out


def _numpy_csr_rmatvec(indptr, indices, data, y, ncols):
    nrows = indptr.shape[0] - 1
    rows = np.repeat(np.arange(nrows), np.diff(indptr))
    out = np.zeros(ncols, dtype=np.complex128)
    np.add.at(out, indices, np.conj(data) * y[rows])
    return out


def _numpy_col_norms(indptr, indices, data, ncols):
    out = np.zeros(ncols, dtype=np.float64)
    np.add.at(out, indices, np.abs(data) ** 2)
    return np.sqrt(out)


def _numpy_power_iteration(indptr, indices, data, ncols, x0, iterations):
    x = x0 / np.linalg.norm(x0)
    history = np.empty(iterations, dtype=np.float64)
    for it in range(iterations):
        y = _numpy_csr_matvec(indptr, indices, data, x)
        rq = np.vdot(y, y).real
        history[it] = rq
        z = _numpy_csr_rmatvec(indptr, indices, data, y, ncols)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            history[it:] = rq
            break
        x = z / nz
    return history, x


def _make_numba():
    from numba import njit

    @njit(cache=True)
    def csr_matvec(indptr, indices, data, x):
        nrows = indptr.shape[0] - 1
        out = np.zeros(nrows, dtype=np.complex128)
        for r in range(nrows):
            acc = 0j
            for p in range(indptr[r], indptr[r + 1]):
                acc += data[p] * x[indices[p]]
            out[r] = acc
        return out

    @njit(cache=True)
    def csr_rmatvec(indptr, indices, data, y, ncols):
        nrows = indptr.shape[0] - 1
        out = np.zeros(ncols, dtype=np.complex128)
        for r in range(nrows):
            yr = y[r]
            for p in range(indptr[r], indptr[r + 1]):
                out[indices[p]] += np.conj(data[p]) * yr
        return out

    @njit(cache=True)
    def col_norms(indptr, indices, data, ncols):
        out = np.zeros(ncols, dtype=np.float64)
        nrows = indptr.shape[0] - 1
        for r in range(nrows):
            for p in range(indptr[r], indptr[r + 1]):
                v = data[p]
                out[indices[p]] += v.real * v.real + v.imag * v.imag
        return np.sqrt(out)

    @njit(cache=True)
    def power_iteration(indptr, indices, data, ncols, x0, iterations):
        x = x0 / np.sqrt(np.sum(np.abs(x0) ** 2))
        history = np.empty(iterations, dtype=np.float64)
        for it in range(iterations):
            y = csr_matvec(indptr, indices, data, x)
            rq = np.sum(np.abs(y) ** 2)
            history[it] = rq
            z = csr_rmatvec(indptr, indices, data, y, ncols)
            nz = np.sqrt(np.sum(np.abs(z) ** 2))
            if nz == 0.0:
                for k in range(it, iterations):
                    history[k] = rq
                break
            x = z / nz
        return history, x

    return csr_matvec, csr_rmatvec, col_norms, power_iteration


USE_NUMBA = os.environ.get("QPLANE_DISABLE_NUMBA", "0") in ("", "0")
if USE_NUMBA:
    try:
        _nb = _make_numba()
    except ImportError:  # pragma: no cover - numba missing
        USE_NUMBA = False

NUMPY_KERNELS = {
    "csr_matvec": _numpy_csr_matvec,
    "csr_rmatvec": _numpy_csr_rmatvec,
    "csr_col_norms": _numpy_col_norms,
    "power_iteration": _numpy_power_iteration,
}

if USE_NUMBA:
    NUMBA_KERNELS = dict(zip(["csr_matvec", "csr_rmatvec", "csr_col_norms", "power_iteration"], _nb))
    csr_matvec, csr_rmatvec, csr_col_norms, power_iteration = _nb
else:
    NUMBA_KERNELS = {}
    csr_matvec = _numpy_csr_matvec
    csr_rmatvec = _numpy_csr_rmatvec
    csr_col_norms = _numpy_col_norms
    power_iteration = _numpy_power_iteration


def backend():
    return "numba" if USE_NUMBA else "numpy"
