"""Time the numba kernels against their numpy twins on representation operators.

    python3 benchmarks/bench_kernels.py [--n 3] [--size 10] [--repeat 5]
"""

import argparse
import time

import numpy as np

from qplane import _kernels
from qplane.qrep import MeasureSpec, TruncationSpec, build_component_lattice


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--size", type=int, default=10, help="N = M of the truncation")
    ap.add_argument("--iterations", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rep = build_component_lattice(args.n, TruncationSpec(args.n, 0.5, args.size, args.size, 3), MeasureSpec((0.6, 0.8, 1.0)))
    A = rep.z(1) @ rep.z(args.n).adjoint() + rep.z(args.n)
    m = A.csr
    x = np.random.default_rng(0).standard_normal(A.dim) + 0j
    print(f"operator dim={A.dim} nnz={A.nnz}")

    if not _kernels.NUMBA_KERNELS:
        print("numba unavailable (or disabled via QPLANE_DISABLE_NUMBA); numpy only")
    for name in ("csr_matvec", "power_iteration"):
        if name == "csr_matvec":
            args_ = (m.indptr, m.indices, m.data, x)
        else:
            args_ = (m.indptr, m.indices, m.data, A.dim, x, args.iterations)
        row = [name]
        for label, table in (("numpy", _kernels.NUMPY_KERNELS), ("numba", _kernels.NUMBA_KERNELS)):
            fn = table.get(name)
            if fn is None:
                continue
            fn(*args_)  # warm-up / compile
            row.append(f"{label}={_best_of(lambda: fn(*args_), args.repeat) * 1e3:.3f} ms")
        print("  ".join(row))


if __name__ == "__main__":
    main()
