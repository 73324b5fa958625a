"""Time the compiled and numpy backends on the hot kernels.

    python3 benchmarks/bench_kernels.py [--length 4000] [--taps 1024] [--repeat 3]

Prints one row per kernel with the best-of-``repeat`` time of each backend,
the speed-up and the largest absolute difference between their outputs.
"""
import argparse
import time

import numpy as np

from fdnfit import backend, fdn, losses


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(length, taps, n_lines, seed):
    rng = np.random.default_rng(seed)
    cp = fdn.constrain(fdn.init_params(seed, n_lines, psi=taps - 1), taps)
    kernels = np.ascontiguousarray(fdn.delay_kernel(cp.m, 2 * taps))
    A, b, c = (np.ascontiguousarray(v) for v in (cp.A, cp.b, cp.c))
    gy = rng.normal(size=length)
    delays = np.round(cp.m).astype(np.int64)
    h = fdn.render_constrained(cp, length)
    w = losses.edp_window()
    a = np.abs(h)
    sigma = losses.frame_std(h, w)
    kappa = losses.kappa_schedule(length)
    return {
        "fdn_forward": lambda k: k.fdn_forward(kernels, A, b, c, cp.d, length, taps),
        "fdn_backward": lambda k: k.fdn_backward(kernels, A, c, gy, taps),
        "fdn_integer": lambda k: k.fdn_integer(delays, A, b, c, cp.d, length),
        "soft_density": lambda k: k.soft_density(a, sigma, kappa, w),
        "soft_density_vjp": lambda k: k.soft_density_vjp(a, sigma, kappa, w, gy),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, default=4000, help="samples rendered")
    parser.add_argument("--taps", type=int, default=1024, help="delay buffer length Q")
    parser.add_argument("--lines", type=int, default=6)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if backend.compiled is None:
        print("compiled backend not available; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"length={args.length} taps={args.taps} lines={args.lines} repeat={args.repeat}")
    print(f"{'kernel':<18}{'cython s':>12}{'numpy s':>12}{'speed-up':>10}{'max diff':>12}")
    for name, run in cases(args.length, args.taps, args.lines, args.seed).items():
        t_c, out_c = best_of(lambda: run(backend.compiled), args.repeat)
        t_p, out_p = best_of(lambda: run(backend.python), args.repeat)
        print(f"{name:<18}{t_c:>12.4f}{t_p:>12.4f}{t_p / t_c:>10.1f}{max_diff(out_c, out_p):>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
