"""Time the numpy and loop (numba-compiled when available) kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed so compilation is excluded, then the best
of ``--repeat`` runs is reported. With PRODSTACK_DISABLE_NUMBA=1 the loop
flavour runs as plain Python.
"""

import argparse
import math
import time

import numpy as np

from prodstack import _accel, kernels


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    n, T, l, c = 16, 60, 9, 16
    x = rng.uniform(size=(n, T, l))
    W = rng.normal(scale=0.3, size=(4 * c, l + c))
    b = rng.normal(scale=0.1, size=4 * c)
    H, C, G = kernels.lstm_forward_np(x, W, b)
    dh = rng.normal(size=(n, c))
    y, inj = rng.normal(size=84), rng.normal(size=84)
    series = rng.normal(size=10_000)
    codes_t = kernels.ordinal_codes_np(series, 3, 1)
    codes_s = kernels.ordinal_codes_np(rng.normal(size=10_000), 3, 1)
    return {
        "lstm_forward (16x60x9, c=16)": ("lstm_forward", (x, W, b)),
        "lstm_backward (16x60x9, c=16)": ("lstm_backward", (x, W, H, C, G, dh)),
        "xcorr_lags (n=84, 0..12)": ("xcorr_lags", (y, inj, 12)),
        "ordinal_codes (n=10000, m=3)": ("ordinal_codes", (series, 3, 1)),
        "ste_from_codes (n=10000, m=3)": ("ste_from_codes", (codes_t, codes_s, 1, math.factorial(3))),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed runs per kernel (default 5)")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"loop backend: {_accel.backend()}")
    print(f"{'kernel':32s} {'numpy ms':>10s} {'loops ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        t_np = best_of(getattr(kernels, name + "_np"), call_args, args.repeat)
        t_lp = best_of(getattr(kernels, name + "_loops"), call_args, args.repeat)
        print(f"{label:32s} {1e3 * t_np:10.3f} {1e3 * t_lp:10.3f} {t_np / t_lp:8.2f}")


if __name__ == "__main__":
    main()
