"""Time the hot kernels under both backends.

    python3 benchmarks/bench_backends.py [--repeat N]

Covers the LSTM recurrence (forward + backward through time) at training
shapes and the raster point lookup used by buffer extraction. The first
numba call is excluded as compile/cache warm-up.
"""

import argparse
import time

import numpy as np

from playa_inundation import kernels
from playa_inundation._backend import NUMBA_AVAILABLE


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    out = []
    for T, B, H in [(72, 16, 16), (120, 32, 32), (120, 64, 64), (322, 64, 128)]:
        xproj = rng.normal(size=(T, B, 4 * H))
        w_hh = rng.uniform(-1 / np.sqrt(H), 1 / np.sqrt(H), size=(4 * H, H))
        dh = rng.normal(size=(T, B, H))

        def lstm(xproj=xproj, w_hh=w_hh, dh=dh):
            gates, c, _, tanh_c = kernels.lstm_forward(xproj, w_hh)
            kernels.lstm_backward(dh, gates, c, tanh_c, w_hh)

        out.append((f"lstm fwd+bwd T={T} B={B} H={H}", lstm))

    values = rng.integers(1, 17, size=(4000, 4000)).astype(np.int64)
    for n in (5000, 1_000_000):
        xs = rng.uniform(-100, 40100, n)
        ys = rng.uniform(-100, 40100, n)
        out.append((f"lookup_cells n={n}", lambda xs=xs, ys=ys: kernels.lookup_cells(xs, ys, 0.0, 40000.0, 10.0, values, -1)))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    rows = []
    for name, fn in cases(np.random.default_rng(0)):
        timings = {}
        for backend in backends:
            with kernels.use_backend(backend):
                fn()  # warm-up
                timings[backend] = _best_of(fn, args.repeat)
        rows.append((name, timings))

    print(f"{'case':<34}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, t in rows:
        line = f"{name:<34}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{t['numpy'] / t['numba']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
