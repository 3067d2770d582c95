"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall times per kernel and size, the speedup, and whether
the two backends agree bit for bit.
"""
import argparse
import time

import numpy as np

from multidefault import _core, _kernels_py

try:
    from multidefault import _kernels
except ImportError:
    _kernels = None

SIZES = [(64, 256), (1024, 256), (16384, 64)]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    for n_child, m in SIZES:
        n_parent = max(1, n_child // 4)
        vals = rng.normal(size=(n_child, m))
        parent = np.sort(rng.integers(0, n_parent, size=n_child))
        prob = rng.uniform(size=n_child)
        yield "backward_step", f"{n_child}x{m}", lambda impl, a=(vals, parent, prob, n_parent): \
            _core.backward_step(*a, impl=impl)
        labels = rng.integers(0, 32, size=m)
        vals2 = rng.normal(size=(n_child, m))
        yield "group_sum", f"{n_child}x{m}", lambda impl, a=(vals2, labels, 32): _core.group_sum(*a, impl=impl)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<14} {'size':>10} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  identical")
    for name, size, run in cases(np.random.default_rng(args.seed)):
        tp, op = best_of(lambda: run(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<14} {size:>10} {tp * 1e3:>10.3f} {'-':>10} {'-':>8}  -")
            continue
        tc, oc = best_of(lambda: run(_kernels), args.repeat)
        same = op.tobytes() == oc.tobytes()
        print(f"{name:<14} {size:>10} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>8.1f}  {same}")


if __name__ == "__main__":
    main()
