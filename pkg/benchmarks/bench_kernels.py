"""Benchmark the jitted kernels against the pure-numpy fallback.

Times batch spline evaluation and packed-network forward passes on compiled
networks of increasing size. Run from the repo root:

    python3 benchmarks/bench_kernels.py [npoints]

The jitted path is warmed before timing so compilation cost is excluded.
"""

import sys
import time

import numpy as np

from kanforge import CompileConfig, compile_tree, parse_expression
from kanforge import kernels
from kanforge.spline import pl_interpolant

CASES = [
    ("xy", "x1*x2"),
    ("sin((x1+x2)*x3)", "sin((x1+x2)*x3)"),
    ("product chain n=8", "*".join(f"x{i}" for i in range(1, 9))),
    ("mixed depth 5", "sin((x1+x2)*(x3+x4))*relu(x5-x6*x1)+cos(x2*x3)"),
]


def _time(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(npoints: int) -> None:
    rng = np.random.default_rng(0)

    print(f"batch spline evaluation, {npoints} points")
    spline = pl_interpolant(np.sin, 0.0, 1.0, 35)
    args = spline._packed_args()
    ts = rng.uniform(0.0, 1.0, npoints)
    rows = []
    if kernels.HAS_NUMBA:
        kernels.eval_spline_batch(*args, ts[:16])  # warm the jit
        t_jit = _time(lambda: kernels.eval_spline_batch(*args, ts))
    else:
        t_jit = None
    t_np = _time(lambda: kernels.eval_spline_batch_numpy(*args, ts))
    _print_row("pl sin G=35", t_jit, t_np)

    print(f"\npacked network forward, {npoints} points")
    for name, expr in CASES:
        net, _ = compile_tree(parse_expression(expr), CompileConfig())
        X = rng.uniform(0.0, 1.0, size=(npoints, net.n_inputs))
        packed = net.packed()
        if kernels.HAS_NUMBA:
            kernels.forward_batch(*packed, X[:16])
            t_jit = _time(lambda: kernels.forward_batch(*packed, X))
        else:
            t_jit = None
        t_np = _time(lambda: kernels.forward_batch_numpy(*packed, X))
        _print_row(name, t_jit, t_np)


def _print_row(name, t_jit, t_np):
    if t_jit is None:
        print(f"  {name:24s} numba: n/a       numpy: {t_np * 1e3:8.2f} ms")
    else:
        print(
            f"  {name:24s} numba: {t_jit * 1e3:8.2f} ms  numpy: {t_np * 1e3:8.2f} ms"
            f"  speedup: {t_np / t_jit:5.1f}x"
        )


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100_000)
