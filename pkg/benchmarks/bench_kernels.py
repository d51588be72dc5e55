"""Compare the compiled kernels against the NumPy fallback.

Runs each backend in its own subprocess (the backend is fixed at import
time via NOISECAL_KERNELS) and times the two full pipelines plus the
biquad filter they are built on. Throughput is reported in samples/s
with the compiled/fallback speedup.

Usage: python benchmarks/bench_kernels.py [--samples N] [--repeats K]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _bench_worker(n_samples: int, repeats: int) -> dict:
    import numpy as np

    import noisecal
    from noisecal import NoiseSpec, PwlPipeline, RbfPipeline, ScaledTanh
    from noisecal import distort, gen_sine, quantize
    from noisecal._kernels import biquad_df2t

    fs = 1.55e6
    clean = gen_sine(997.0, 0.9, n_samples, fs)
    frame = distort(ScaledTanh(2.0), clean, NoiseSpec(0.01, 7))
    codes = quantize(frame, 10)

    def best_of(fn):
        fn()  # warmup
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    def run_rbf():
        RbfPipeline(fs, n_pieces=256, block_size=4, block_interval=128,
                    reintegrate_period=1024, alpha=0.05).process(frame)

    def run_pwl():
        PwlPipeline(block_size=4, block_interval=128, ma_len=64,
                    n_ranges=32, w_max=1024, deadband_shift=1,
                    seed=77).process(codes)

    x = frame.samples

    def run_biquad():
        biquad_df2t(0.2, 0.4, 0.2, -0.3, 0.2, x, 0.0, 0.0)

    return {
        "backend": noisecal.kernel_backend,
        "n_samples": n_samples,
        "rbf_s": best_of(run_rbf),
        "pwl_s": best_of(run_pwl),
        "biquad_s": best_of(run_biquad),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--worker", choices=("c", "py"), help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(_bench_worker(args.samples, args.repeats)))
        return 0

    results = {}
    for backend in ("c", "py"):
        env = dict(os.environ, NOISECAL_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--worker", backend,
             "--samples", str(args.samples),
             "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True,
        )
        if proc.returncode != 0:
            print(f"{backend} backend failed:\n{proc.stderr}", file=sys.stderr)
            return 1
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])
        assert results[backend]["backend"] == backend

    n = args.samples
    print(f"{n:,} samples per run, best of {args.repeats}\n")
    print(f"{'kernel':<10} {'compiled':>14} {'fallback':>14} {'speedup':>9}")
    for key, label in (("rbf_s", "rbf"), ("pwl_s", "pwl"), ("biquad_s", "biquad")):
        tc, tp = results["c"][key], results["py"][key]
        print(f"{label:<10} {n / tc:>12,.0f}/s {n / tp:>12,.0f}/s {tp / tc:>8.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
