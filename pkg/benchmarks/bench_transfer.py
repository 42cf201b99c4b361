"""Time the compiled transfer kernels against the numpy fallback.

    python benchmarks/bench_transfer.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from corrpoly import _transfer_py
from corrpoly.field import Grid
from corrpoly.polymer import walk_kernel

try:
    from corrpoly import _transfer as _cy
except ImportError:
    _cy = None

CASES = [
    ("d=1 L=512 dt=1", Grid(1, 512, 1.0), 1.0, 256),
    ("d=1 L=2000 a=0.1 dt=0.05", Grid(1, 2000, 0.1), 0.05, 256),
    ("d=2 L=64 dt=1", Grid(2, 64, 1.0), 1.0, 64),
    ("d=3 L=12 dt=1", Grid(3, 12, 1.0), 1.0, 16),
]


def _inputs(grid, dt, n):
    bands = walk_kernel(grid, dt).bands
    rng = np.random.default_rng(0)
    mult = np.exp(0.5 * rng.normal(size=(n, grid.n_sites)))
    w0 = np.zeros(grid.n_sites)
    w0[grid.flat_index((0,) * grid.dimension)] = 1.0
    return bands, mult, w0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("python", _transfer_py)] + ([("cython", _cy)] if _cy else [])
    print(f"{'case':28s} {'op':9s} " + " ".join(f"{n:>10s}" for n, _ in backends) + ("   speedup" if _cy else ""))
    for label, grid, dt, n in CASES:
        bands, mult, w0 = _inputs(grid, dt, n)
        _, _, stored = _transfer_py.forward(bands, grid.shape, w0, mult, n, None, True)
        u = np.random.default_rng(1).random((256, n + 1))
        ops = {
            "forward": lambda m: m.forward(bands, grid.shape, w0, mult, n),
            "sample": lambda m: m.backward_sample(bands, grid.shape, stored, u),
        }
        for op, call in ops.items():
            times = [min(timeit.repeat(lambda: call(m), number=1, repeat=args.repeat)) for _, m in backends]
            line = f"{label:28s} {op:9s} " + " ".join(f"{t * 1e3:8.1f}ms" for t in times)
            if len(times) == 2:
                line += f"   {times[0] / times[1]:6.1f}x"
            print(line, flush=True)


if __name__ == "__main__":
    main()
