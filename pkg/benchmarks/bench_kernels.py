"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --n 2000 --h 40 --repeat 3

Each kernel is fed identical inputs under both backends; the table reports
the best wall time of ``--repeat`` runs and the speed-up.  Outputs are also
compared so a timing is never reported for a kernel that disagrees.
"""
import argparse
import sys
import time

import numpy as np

from nncmi import _pykernels, kernels
from nncmi.metric import Block


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def counting_case(n, h, seed):
    rng = np.random.default_rng(seed)
    idx = [Block(rng.normal(size=n)).index(h) for _ in range(3)]
    args = []
    for i in idx:
        args += [i.rows, i.brk, i.length]

    def run(impl):
        out = np.empty((3, n))
        impl.ball_counts(*args, h, False, out[0], out[1], out[2])
        return out

    return run


def bias_case(n, h, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(1, h + 1, size=n)
    b = rng.integers(1, h + 1, size=n)
    logs = np.concatenate([[0.0], np.log(np.arange(1, h + 1, dtype=np.float64))])

    def run(impl):
        out = np.empty(n)
        impl.hypergeom_bias(h, a, b, logs, out)
        return out

    return run


def sweep_case(L, sweeps, seed):
    rng = np.random.default_rng(seed)
    N = L * L
    angles = rng.random(N) * 2 * np.pi
    walk = np.where(rng.random(sweeps) < 0.5, 0.2, -0.2)
    prop = rng.vonmises(0.0, 2.0, size=(sweeps, N))
    unif = rng.random((sweeps, N))
    order = np.arange(N, dtype=np.int32)[None, :]
    record = np.array([0, 1], dtype=np.int64)

    def run(impl):
        a = angles.copy()
        out, acc = np.empty((sweeps, 2)), np.empty(sweeps, dtype=np.int64)
        impl.xy_sweeps(a, L, 0, 1.0, 0.8, walk, prop, unif, order, record, out, acc)
        return out

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="points per counting problem")
    ap.add_argument("--h", type=int, default=40, help="ball size")
    ap.add_argument("--L", type=int, default=8, help="lattice side for the sweep kernel")
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not kernels.COMPILED:
        print("compiled kernels are not available; nothing to compare", file=sys.stderr)
        return 1
    compiled = kernels._impl
    cases = {
        "ball_counts": counting_case(args.n, args.h, args.seed),
        "hypergeom_bias": bias_case(args.n, max(args.h, 2), args.seed),
        "xy_sweeps": sweep_case(args.L, args.sweeps, args.seed),
    }
    print(f"{'kernel':<16}{'compiled s':>12}{'python s':>12}{'speed-up':>10}")
    for name, run in cases.items():
        fast, slow = run(compiled), run(_pykernels)
        if not np.allclose(fast, slow, rtol=0, atol=1e-12):
            print(f"{name:<16}  outputs disagree", file=sys.stderr)
            return 1
        tc = best_of(lambda: run(compiled), args.repeat)
        tp = best_of(lambda: run(_pykernels), args.repeat)
        print(f"{name:<16}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
