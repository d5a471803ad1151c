"""Benchmark the numba kernels against their pure-numpy twins.

Run: python3 benchmarks/bench_kernels.py [--repeat 20]

Both paths are importable regardless of ``PVRED_DISABLE_JIT``, so one process
times them side by side. Each kernel is warmed up first so compilation is
not counted, and outputs are compared before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pvred import _kernels as K
from pvred._backend import USE_NUMBA


def _timeit(fn, args, repeat):
    fn(*args)  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng):
    e = rng.normal(size=(20000, 3))
    g = rng.normal(size=(20000, 4))
    rot = K.rodrigues_np(e)
    B, D, P, H = 16, 12, 12, 64
    x, v, p = rng.normal(size=(B, D)), rng.normal(size=(B, D)), rng.normal(size=(B, P))
    h = rng.uniform(-0.9, 0.9, size=(B, H))
    ux, uv = rng.normal(size=(3 * H, D)), rng.normal(size=(3 * H, D))
    up, w, b = rng.normal(size=(3 * H, P)), rng.normal(size=(3 * H, H)), rng.normal(size=3 * H)
    _, z, r, hc = K.gru_forward_np(x, v, p, h, ux, uv, up, w, b)
    dh = rng.normal(size=(B, H))
    return {
        "qt_forward (N=20000)": ("qt_forward", (e,)),
        "qt_jacobian (N=20000)": ("qt_jacobian", (e,)),
        "qt_backward (N=20000)": ("qt_backward", (e, g)),
        "rodrigues (N=20000)": ("rodrigues", (e,)),
        "rotmat_to_euler (N=20000)": ("rotmat_to_euler", (rot,)),
        "gru_forward (B=16, H=64)": ("gru_forward", (x, v, p, h, ux, uv, up, w, b)),
        "gru_backward (B=16, H=64)": ("gru_backward", (x, v, p, h, z, r, hc, dh, ux, uv, up, w)),
    }


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def run(repeat=20, seed=0):
    if not USE_NUMBA:
        print("numba disabled or missing; both columns time the numpy path")
    rng = np.random.default_rng(seed)
    print(f"{'kernel':<28s}{'numpy ms':>10s}{'numba ms':>10s}{'speedup':>9s}{'max diff':>11s}")
    rows = []
    for label, (name, args) in _cases(rng).items():
        f_np, f_nb = getattr(K, name + "_np"), getattr(K, name + "_nb")
        diff = _max_diff(f_np(*args), f_nb(*args))
        t_np = _timeit(f_np, args, repeat)
        t_nb = _timeit(f_nb, args, repeat)
        rows.append((label, t_np, t_nb, diff))
        print(f"{label:<28s}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x{diff:>11.1e}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    run(args.repeat, args.seed)


if __name__ == "__main__":
    main()
