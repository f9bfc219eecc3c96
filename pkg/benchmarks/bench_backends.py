"""Time the numba kernels against their pure-numpy fallbacks.

Runs the two hot paths (batched ISTA, curve-fit fusion) on workloads
sized like one 128x128 super-resolution call, with warm-up iterations
so numba JIT compilation is excluded. Usage:

    python3 benchmarks/bench_backends.py [--repeats 5] [--cols 961]
"""

import argparse
import statistics
import time

import numpy as np

from comsr import _kernels as kr
from comsr import fusion
from comsr.degradation import DegradationConfig, generate_burst
from comsr.testimages import desk_set


def _timed(fn, repeats, warmups=2):
    for _ in range(warmups):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    mean = statistics.fmean(samples)
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return mean, std


def bench_ista(repeats, cols, atoms, dim):
    rng = np.random.default_rng(0)
    d = rng.standard_normal((dim, atoms)) / np.sqrt(dim)
    y = rng.standard_normal((dim, cols))
    lipschitz = 1.01 * np.linalg.norm(d, 2) ** 2
    results = {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and not kr.HAS_NUMBA:
            continue
        results[backend] = _timed(
            lambda b=backend: kr.ista_batch(d, y, 0.05, lipschitz, 100, 1e-5, backend=b),
            repeats,
        )
    return f"ista_batch  K={atoms} m={dim} P={cols} 100 iters", results


def bench_curve_fit(repeats, frames_n):
    hr = desk_set()[0][1]
    cfg = DegradationConfig(scale=2, frames=frames_n, blur_sigma=1.0, seed=3)
    frames = generate_burst(hr, cfg)
    for frame in frames:
        frame.estimated_shift = frame.true_shift
    results = {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and not kr.HAS_NUMBA:
            continue
        results[backend] = _timed(
            lambda b=backend: fusion.curve_fit_fuse(frames, 2, backend=b),
            repeats,
        )
    return f"curve_fit_fuse  128x128 scale 2 N={frames_n}", results


def report(label, results):
    print(label)
    for backend, (mean, std) in results.items():
        print(f"  {backend:6s} {mean * 1e3:9.2f} ms +- {std * 1e3:6.2f}")
    if "numba" in results and "numpy" in results:
        speedup = results["numpy"][0] / results["numba"][0]
        print(f"  numba speedup: {speedup:.2f}x")
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--cols", type=int, default=961,
                        help="ISTA batch size (961 = 128x128 image, stride 4)")
    parser.add_argument("--atoms", type=int, default=256)
    parser.add_argument("--dim", type=int, default=16,
                        help="LR patch dimension (16 = patch 8 at scale 2)")
    parser.add_argument("--frames", type=int, default=8)
    args = parser.parse_args()
    if not kr.HAS_NUMBA:
        print("numba unavailable; timing the numpy fallback only\n")
    report(*bench_ista(args.repeats, args.cols, args.atoms, args.dim))
    report(*bench_curve_fit(args.repeats, args.frames))


if __name__ == "__main__":
    main()
