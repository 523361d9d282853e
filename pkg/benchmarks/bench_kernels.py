"""Time the numba and numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--n 2000] [--k 5] [--j 30] [--repeat 5]

Reports the best-of-``repeat`` time for each kernel, the speed-up, and the
largest absolute difference between the two outputs (0 means bitwise equal). Compilation is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from unicdm import _kernels as kr
from unicdm.losses import Penalty, loss_tables


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--j", type=int, default=30)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if not kr.HAVE_NUMBA:
        raise SystemExit("numba is unavailable or disabled (UNICDM_DISABLE_NUMBA); nothing to compare")

    rng = np.random.default_rng(0)
    M = 1 << args.k
    X = np.ascontiguousarray(rng.integers(0, 2, (args.n, args.j)).astype(np.uint8))
    mu = rng.random((M, args.j))
    c0, c1 = loss_tables(mu, "ce")
    h = Penalty.neglog().values(rng.dirichlet(np.ones(M)))
    a = rng.integers(0, M, args.n)
    L = kr.loss_matrix_numpy(X, c0, c1, h)

    cases = [
        ("loss_matrix", (X, c0, c1, h)),
        ("assign", (X, c0, c1, h)),
        ("row_losses", (X, c0, c1, h, a)),
        ("class_sums", (X, a, M)),
        ("log_posterior", (L,)),
    ]
    print(f"N={args.n} K={args.k} J={args.j}  (best of {args.repeat})")
    print(f"{'kernel':<14}{'numpy ms':>10}{'numba ms':>10}{'speed-up':>10}  max |diff|")
    for name, inputs in cases:
        f_np, f_nb = getattr(kr, f"{name}_numpy"), getattr(kr, f"{name}_numba")
        t_np, t_nb = best_of(f_np, inputs, args.repeat), best_of(f_nb, inputs, args.repeat)
        r_np, r_nb = f_np(*inputs), f_nb(*inputs)
        if not isinstance(r_np, tuple):
            r_np, r_nb = (r_np,), (r_nb,)
        diff = max(float(np.max(np.abs(np.asarray(u, float) - np.asarray(v, float)), initial=0.0)) for u, v in zip(r_np, r_nb))
        print(f"{name:<14}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>9.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
