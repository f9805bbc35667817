"""Benchmark: compiled Kalman kernels vs the pure NumPy fallback.

Runs two layers of comparison:

1. kernel microbenchmarks (predict / update / gating) for each model's
   state and measurement dimensions, both backends in-process;
2. an end-to-end tracking run of a 1,000-frame, 50-target sequence per
   backend, executed in subprocesses so the import-time backend selection
   (RAILCOUNT_PURE) applies.

Usage: python benchmarks/bench_backends.py [--frames 1000] [--repeat 20000]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from railcount import _kernels_py

try:
    from railcount import _kernels
except ImportError:
    _kernels = None

SHAPES = {"cv8d": (8, 4), "ca12d": (12, 4), "phys3d": (6, 3)}

_CHILD_CODE = """
import time
from railcount.kernels import active_backend
from railcount.simulator import SceneConfig, NoiseConfig, generate
from railcount.tracker import TrackerConfig, run_sequence
from railcount.motion_models import MotionModel

frames = {frames}
scene = SceneConfig(seed=77, num_pedestrians=50, duration=frames / 12.5,
                    fps=12.5, v0=0.08, decel=0.0005, d0=16.0)
seq = generate(scene, NoiseConfig(miss_rate=0.1, fp_rate=0.2))
config = TrackerConfig(model=MotionModel.PHYS3D, fps=scene.fps)
start = time.perf_counter()
run_sequence(seq.detections, config, seq.cam)
elapsed = time.perf_counter() - start
print(f"{{active_backend()}} {{elapsed:.3f}}")
"""


def _bench_kernels(module, n: int, m: int, repeat: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    a = rng.normal(size=(n, n))
    cov = a @ a.T + np.eye(n)
    mean = rng.normal(size=n)
    transition = np.eye(n) + 0.05 * rng.normal(size=(n, n))
    q = np.diag(rng.uniform(0.01, 0.5, n))
    obs = rng.normal(size=(m, n))
    meas = np.diag(rng.uniform(0.1, 2.0, m))
    innovation = rng.normal(size=m)
    innovations = rng.normal(size=(20, m))

    out = {}
    start = time.perf_counter()
    for _ in range(repeat):
        module.kf_predict(mean, cov, transition, q)
    out["predict"] = (time.perf_counter() - start) / repeat
    start = time.perf_counter()
    for _ in range(repeat):
        module.kf_update(mean, cov, obs, meas, innovation)
    out["update"] = (time.perf_counter() - start) / repeat
    start = time.perf_counter()
    for _ in range(repeat):
        module.kf_gating(cov, obs, meas, innovations)
    out["gating"] = (time.perf_counter() - start) / repeat
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20000)
    parser.add_argument("--frames", type=int, default=1000)
    args = parser.parse_args()

    if _kernels is None:
        print("compiled kernels unavailable; only the pure backend is measured")

    print(f"kernel microbenchmarks ({args.repeat} calls each, times in us):")
    header = f"{'model':8s} {'op':8s} {'pure':>9s}"
    if _kernels is not None:
        header += f" {'compiled':>9s} {'speedup':>8s}"
    print(header)
    for model, (n, m) in SHAPES.items():
        pure = _bench_kernels(_kernels_py, n, m, args.repeat)
        comp = _bench_kernels(_kernels, n, m, args.repeat) if _kernels else None
        for op in ("predict", "update", "gating"):
            line = f"{model:8s} {op:8s} {pure[op] * 1e6:9.2f}"
            if comp:
                line += f" {comp[op] * 1e6:9.2f} {pure[op] / comp[op]:7.1f}x"
            print(line)

    print(f"\nend-to-end: phys3d tracker, {args.frames} frames, 50 targets")
    code = _CHILD_CODE.format(frames=args.frames)
    for pure in (False, True):
        env = dict(os.environ)
        if pure:
            env["RAILCOUNT_PURE"] = "1"
        else:
            env.pop("RAILCOUNT_PURE", None)
        result = subprocess.run([sys.executable, "-c", code], env=env,
                                capture_output=True, text=True, check=False)
        if result.returncode != 0:
            print(f"  run failed: {result.stderr.strip()}")
            return 1
        backend, elapsed = result.stdout.split()
        print(f"  {backend:9s} {float(elapsed):7.3f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
