"""Time the memory-attention inference kernel: numba vs. the numpy fallback.

    python benchmarks/bench_kernels.py [--grid 64] [--channels 64] [--frames 5] [--radius 6]

The first numba call compiles (or loads the on-disk cache) and is excluded.
"""
import argparse
import time

import numpy as np

from memtrack.kernels import memory_attention_frame


def bench(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=64, help="feature grid side (64 = 256 px frames)")
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--frames", type=int, default=5, help="memory bank size")
    ap.add_argument("--labels", type=int, default=3)
    ap.add_argument("--radius", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    g, C, M = args.grid, args.channels, args.frames
    q = rng.normal(size=(C, g, g)) / np.sqrt(C)
    keys = rng.normal(size=(M, C, g, g)) / np.sqrt(C)
    values = rng.dirichlet(np.ones(args.labels), size=(M, g, g)).transpose(0, 3, 1, 2)
    dil = np.array([max(1, -(-d // 15)) for d in range(1, M + 1)])

    run = {b: (lambda b=b: memory_attention_frame(q, keys, values, dil, args.radius, backend=b))
           for b in ("numba", "numpy")}
    run["numba"]()  # compile
    t_nb, out_nb = bench(run["numba"], args.repeat)
    t_np, out_np = bench(run["numpy"], max(1, args.repeat // 2))
    print(f"grid {g}x{g}  C={C}  M={M}  r={args.radius}  labels={args.labels}")
    print(f"numba  {t_nb * 1e3:9.1f} ms/frame")
    print(f"numpy  {t_np * 1e3:9.1f} ms/frame")
    print(f"speedup {t_np / t_nb:6.1f}x   max |diff| {np.abs(out_nb - out_np).max():.2e}")


if __name__ == "__main__":
    main()
