"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the test names themselves mirror the criterion numbers. The heavy
20-sequence benchmark is computed once and shared between criteria 2 and 3.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from railcount import io
from railcount.association import solve_assignment
from railcount.benchmark import (
    benchmark_scenes,
    mirrored_line_count,
    run_pipeline,
)
from railcount.cli import main
from railcount.counting import BandConfig, count_sequence
from railcount.geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    HeadBox,
    Point3D,
    backproject,
    measurement_jacobian,
    project,
)
from railcount.kernels import active_backend
from railcount.metrics import clear_mot, counting_metrics, identity_metrics
from railcount.motion_models import (
    KalmanState,
    MotionModel,
    Phys3DFilter,
    make_filter,
)
from railcount.simulator import (
    NoiseConfig,
    SceneConfig,
    generate,
    scripted_scenarios,
    zero_noise,
)
from railcount.tracker import TrackerConfig, run_sequence

CAM = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0,
                       image_width=1920.0, image_height=1080.0)


def _report(criterion: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion:02d} [{status}] {detail}")


@pytest.fixture(scope="module")
def benchmark_runs():
    """Aggregates from tracking all three models over the fixed 20-scene
    benchmark. Only scalars survive the fixture so later timing-sensitive
    criteria are not slowed by a large retained object graph."""
    start = time.perf_counter()
    scenes = benchmark_scenes()
    sequences = [generate(scene, noise) for scene, noise in scenes]
    count_pairs = {model: [] for model in MotionModel}
    idsw = {model: 0 for model in MotionModel}
    line_pairs, degen_pairs = [], []
    for model in MotionModel:
        for seq in sequences:
            result = run_pipeline(seq, model)
            count_pairs[model].append((result.counts.final, result.true_count))
            idsw[model] += result.report.idsw
            if model is MotionModel.PHYS3D:
                line = mirrored_line_count(result.outputs, (0.05 + 0.20) / 2,
                                           seq.cam.image_width)
                line_pairs.append((line, seq.true_count))
                degen = count_sequence(result.outputs, seq.cam.image_width,
                                       BandConfig(start=0.05, end=0.05))
                degen_pairs.append((degen.final, seq.true_count))
    elapsed = time.perf_counter() - start
    return {
        "count_pairs": count_pairs,
        "idsw": idsw,
        "line_pairs": line_pairs,
        "degen_pairs": degen_pairs,
        "elapsed": elapsed,
    }


def test_criterion_01_paper_numbers_not_reproducible_statement():
    # The paper's headline values need the unreleased dataset and trained
    # networks; acceptance rests on the property suites and ordering
    # reproductions. The README must say so.
    readme = Path(__file__).resolve().parents[1] / "README.md"
    text = readme.read_text(encoding="utf-8")
    ok = "not reproducible" in text.lower() and "2.97" in text
    _report(1, ok, "README states the desk-scale reproducibility boundary")
    assert ok


def test_criterion_02_model_ordering(benchmark_runs):
    elapsed = benchmark_runs["elapsed"]
    mape, idsw = {}, benchmark_runs["idsw"]
    for model, pairs in benchmark_runs["count_pairs"].items():
        mape[model] = counting_metrics(pairs).mape
    ok = (
        mape[MotionModel.PHYS3D] < mape[MotionModel.CA12D] < mape[MotionModel.CV8D]
        and idsw[MotionModel.PHYS3D] <= idsw[MotionModel.CA12D] <= idsw[MotionModel.CV8D]
        and mape[MotionModel.PHYS3D] <= 10.0
        and elapsed < 120.0
    )
    _report(2, ok, "MAPE phys3d {:.2f} < ca12d {:.2f} < cv8d {:.2f}; IDSW {} <= {} <= {}; "
                   "runtime {:.0f}s < 120s".format(
                       mape[MotionModel.PHYS3D], mape[MotionModel.CA12D],
                       mape[MotionModel.CV8D], idsw[MotionModel.PHYS3D],
                       idsw[MotionModel.CA12D], idsw[MotionModel.CV8D], elapsed))
    assert mape[MotionModel.PHYS3D] < mape[MotionModel.CA12D] < mape[MotionModel.CV8D]
    assert idsw[MotionModel.PHYS3D] <= idsw[MotionModel.CA12D] <= idsw[MotionModel.CV8D]
    assert mape[MotionModel.PHYS3D] <= 10.0
    assert elapsed < 120.0


def test_criterion_03_band_beats_line(benchmark_runs):
    # benchmark noise satisfies the criterion's miss-rate floor
    assert NoiseConfig().miss_rate >= 0.1
    band_rep = counting_metrics(benchmark_runs["count_pairs"][MotionModel.PHYS3D])
    line_rep = counting_metrics(benchmark_runs["line_pairs"])
    degen_rep = counting_metrics(benchmark_runs["degen_pairs"])
    mean_true = float(np.mean([t for _, t in benchmark_runs["line_pairs"]]))
    ok = (band_rep.mape <= line_rep.mape / 3.0
          and degen_rep.me < -0.5 * mean_true)
    _report(3, ok, f"band MAPE {band_rep.mape:.2f} vs line {line_rep.mape:.2f} "
                   f"(ratio {band_rep.mape / line_rep.mape:.3f}); degenerate ME "
                   f"{degen_rep.me:.1f} < {-0.5 * mean_true:.1f}")
    assert band_rep.mape <= line_rep.mape / 3.0
    assert degen_rep.me < -0.5 * mean_true


def test_criterion_04_kalman_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    f3d = Phys3DFilter(CAM)

    # Depth-block propagation against the hand formula at 1e-12.
    worst = 0.0
    for _ in range(10_000):
        z = rng.uniform(0.6, 100)
        dz = rng.uniform(-10, 10)
        ddz = rng.uniform(-5, 5)
        dt = rng.uniform(0.01, 0.2)
        state = KalmanState(np.array([1.0, 0.5, 0.3, z, dz, ddz]), np.eye(6), 0.75)
        out = f3d.predict(state, dt)
        want_z = max(z + dz * dt + 0.5 * ddz * dt * dt, MIN_DEPTH)
        worst = max(worst, abs(out.mean[3] - want_z),
                    abs(out.mean[4] - (dz + ddz * dt)), abs(out.mean[5] - ddz))
    assert worst <= 1e-12

    # Symmetric PSD covariance over 10,000 predict/update cycles per model.
    min_eig = 0.0
    for model in MotionModel:
        filt = make_filter(model, CAM)
        x, y, h, a = 800.0, 500.0, 40.0, 0.75
        state = filt.initiate(HeadBox(x, y, a, h))
        for _ in range(10_000):
            x = float(np.clip(x + rng.normal(0, 4.0), 50, 1870))
            y = float(np.clip(y + rng.normal(0, 4.0), 50, 1030))
            h = float(np.clip(h * (1 + rng.normal(0, 0.05)), 10, 120))
            a = float(np.clip(a + rng.normal(0, 0.02), 0.5, 1.0))
            state = filt.predict(state, dt=0.04)
            state = filt.update(state, HeadBox(x, y, a, h))
            assert np.array_equal(state.covariance, state.covariance.T)
            min_eig = min(min_eig, float(np.linalg.eigvalsh(state.covariance).min()))
    assert min_eig >= -1e-9

    # Jacobian against central finite differences at 1e-6 relative.
    def measure(m):
        px, py = project(Point3D(m[0], m[1], m[3]), CAM)
        return np.array([px, py, CAM.fy * m[2] / m[3]])

    for _ in range(1_000):
        mean = np.array([
            rng.uniform(-10, 10), rng.uniform(-5, 5), rng.uniform(0.2, 0.4),
            rng.uniform(2, 50), rng.uniform(-5, 5), rng.uniform(-2, 2),
        ])
        jac = measurement_jacobian(mean, CAM)
        fd = np.zeros((3, 6))
        for j in range(6):
            hi, lo = mean.copy(), mean.copy()
            hi[j] += 1e-5
            lo[j] -= 1e-5
            fd[:, j] = (measure(hi) - measure(lo)) / 2e-5
        assert np.allclose(jac, fd, rtol=1e-6, atol=1e-6)

    elapsed = time.perf_counter() - start
    ok = elapsed < 10.0
    _report(4, ok, f"Eq-depth propagation worst error {worst:.2e} <= 1e-12; "
                   f"min eigenvalue {min_eig:.2e} >= -1e-9; Jacobian ok; "
                   f"runtime {elapsed:.1f}s < 10s")
    assert ok


def test_criterion_05_assignment_optimality():
    rng = np.random.default_rng(505)
    checked = 0
    for _ in range(1_000):
        rows = int(rng.integers(1, 7))
        cols = int(rng.integers(1, 7))
        costs = rng.integers(0, 10_000, (rows, cols)).astype(float)
        pairs, _, _ = solve_assignment(costs, max_cost=1e12)
        total = sum(costs[r, c] for r, c in sorted(pairs))
        best = None
        if rows <= cols:
            for perm in itertools.permutations(range(cols), rows):
                cand = sum(costs[r, c] for r, c in enumerate(perm))
                best = cand if best is None else min(best, cand)
        else:
            for perm in itertools.permutations(range(rows), cols):
                cand = sum(costs[r, c] for c, r in enumerate(perm))
                best = cand if best is None else min(best, cand)
        assert total == best
        checked += 1
    _report(5, True, f"{checked} random matrices up to 6x6: solver total equals "
                     f"brute-force minimum exactly")


def test_criterion_06_metric_fixtures():
    box = HeadBox(100.0, 100.0, 0.75, 20.0)

    gt = {1: [(1, box)], 2: [(1, box)]}
    missing = clear_mot(gt, {1: [(9, box)]})
    assert missing.mota == 50.0 and missing.fn == 1

    switched = clear_mot(gt, {1: [(7, box)], 2: [(8, box)]})
    assert switched.mota == 50.0 and switched.idsw == 1

    gt10 = {f: [(1, box)] for f in range(1, 11)}
    hyp_split = {f: [(7 if f <= 5 else 8, box)] for f in range(1, 11)}
    ident = identity_metrics(gt10, hyp_split)
    assert ident.idf1 == 50.0

    rep = counting_metrics([(19, 19), (18, 19)])
    assert rep.mae == 0.5
    assert rep.me == -0.5
    assert rep.rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert rep.mape == pytest.approx(100.0 / 19 / 2, abs=1e-12)

    spot = counting_metrics([(19, 18)])
    assert round(spot.mape, 2) == 5.56

    _report(6, True, "MOTA-50 split cases, IDF1-50 fragmentation, count "
                     "arithmetic, and the (19, 18) -> 5.56 spot value all exact")


def test_criterion_07_geometry_round_trip_and_scale():
    rng = np.random.default_rng(707)
    worst_rt = 0.0
    for _ in range(10_000):
        z = rng.uniform(1.0, 100.0)
        point = Point3D(rng.uniform(-20, 20), rng.uniform(-10, 10), z)
        head_height = rng.uniform(0.2, 0.4)
        x, y = project(point, CAM)
        back = backproject(HeadBox(x, y, 0.75, CAM.fy * head_height / z),
                           head_height, CAM)
        worst_rt = max(worst_rt, abs(back.x - point.x), abs(back.y - point.y),
                       abs(back.z - point.z))
    assert worst_rt <= 1e-9

    worst_scale = 0.0
    for _ in range(10_000):
        s = rng.uniform(0.1, 10.0)
        z = rng.uniform(1.0, 50.0)
        point = Point3D(rng.uniform(-10, 10), rng.uniform(-5, 5), z)
        scaled_cam = CameraIntrinsics(CAM.fx * s, CAM.fy * s, CAM.cx * s,
                                      CAM.cy * s, CAM.image_width * s,
                                      CAM.image_height * s)
        x, y = project(point, CAM)
        h = CAM.fy * 0.3 / z
        a = backproject(HeadBox(x, y, 0.75, h), 0.3, CAM)
        b = backproject(HeadBox(x * s, y * s, 0.75, h * s), 0.3, scaled_cam)
        worst_scale = max(worst_scale, abs(a.x - b.x), abs(a.y - b.y), abs(a.z - b.z))
    assert worst_scale <= 1e-9
    _report(7, True, f"round-trip worst {worst_rt:.2e} m and scale-invariance "
                     f"worst {worst_scale:.2e} over 10,000 points each")


SCENE_CFG = """
seed=5
num_pedestrians=6
duration=6.0
v0=3.0
decel=0.6
d0=10.0
fps=12.5
"""

NOISE_CFG = """
miss_rate=0.15
fp_rate=0.2
"""


def test_criterion_08_determinism(tmp_path):
    scene = tmp_path / "scene.cfg"
    scene.write_text(SCENE_CFG)
    noise = tmp_path / "noise.cfg"
    noise.write_text(NOISE_CFG)

    sims = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--scene", str(scene), "--noise", str(noise),
                     "--out", str(out), "--seed", "42"]) == 0
        sims.append(out)
    data_files = ("gt.txt", "det.txt", "emb.txt", "truth.txt", "cam.txt")
    assert all((sims[0] / n).read_bytes() == (sims[1] / n).read_bytes()
               for n in data_files)

    results = []
    for name in ("ra.txt", "rb.txt"):
        res = tmp_path / name
        assert main(["track", "--model", "phys3d", "--cam", str(sims[0] / "cam.txt"),
                     "--det", str(sims[0] / "det.txt"),
                     "--emb", str(sims[0] / "emb.txt"), "--out", str(res),
                     "--fps", "12.5"]) == 0
        results.append(res)
    assert results[0].read_bytes() == results[1].read_bytes()
    assert results[0].with_suffix(".counts.txt").read_bytes() == \
        results[1].with_suffix(".counts.txt").read_bytes()

    seq_root = tmp_path / "sequences"
    for i in range(2):
        assert main(["simulate", "--scene", str(scene), "--noise", str(noise),
                     "--out", str(seq_root / f"seq{i}"), "--seed", str(60 + i)]) == 0
    sweeps = []
    for jobs in ("1", "2"):
        out = tmp_path / f"sweep{jobs}"
        assert main(["sweep", "--param", "band", "--sequences", str(seq_root),
                     "--grid", "start:0.05,0.1", "end:0.2,0.3",
                     "--out", str(out), "--jobs", jobs]) == 0
        sweeps.append(out / "sweep.csv")
    assert sweeps[0].read_bytes() == sweeps[1].read_bytes()
    _report(8, True, "simulator outputs, tracker results, and sweep reports are "
                     "byte-identical across runs and --jobs settings")


def test_criterion_09_noiseless_end_to_end():
    failures = []
    for name, scenario in scripted_scenarios().items():
        result = run_pipeline(scenario.sequence, MotionModel.PHYS3D, evaluate=False)
        if result.counts.final != scenario.true_count:
            failures.append((name, result.counts.final, scenario.true_count))
    for seed in range(10):
        scene = SceneConfig(seed=seed, num_pedestrians=5 + seed * 4)
        seq = generate(scene, zero_noise())
        result = run_pipeline(seq, MotionModel.PHYS3D, evaluate=False)
        if result.counts.final != seq.true_count:
            failures.append((f"seed-{seed}", result.counts.final, seq.true_count))
    ok = not failures
    _report(9, ok, "exact counts on all scripted scenarios and 10 random "
                   f"zero-noise seeds{'' if ok else f'; failures: {failures}'}")
    assert not failures


def test_criterion_10_tracking_throughput():
    import gc

    scene = SceneConfig(seed=77, num_pedestrians=50, duration=160.0, fps=12.5,
                        v0=0.08, decel=0.0005, d0=16.0)
    seq = generate(scene, NoiseConfig(miss_rate=0.1, fp_rate=0.2))
    assert seq.n_frames == 2000
    config = TrackerConfig(model=MotionModel.PHYS3D, fps=scene.fps)
    gc.collect()
    start = time.perf_counter()
    outputs = run_sequence(seq.detections, config, seq.cam)
    elapsed = time.perf_counter() - start
    peak = max(len(o.entries) for o in outputs)
    ok = elapsed < 10.0
    _report(10, ok, f"2,000 frames with up to {peak} concurrent targets in "
                    f"{elapsed:.1f}s (< 10s, {active_backend()} kernels)")
    assert ok
