"""Acceptance gate: twelve end-to-end criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (collected again in the pytest
terminal summary).  Run directly with ``python3 tests/test_acceptance.py``
or through pytest.
"""

import contextlib
import sys
import time
import warnings
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from fetalface.cli import main as cli_main  # noqa: E402
from fetalface.landmarks import MODEL_LANDMARKS, LandmarkSet  # noqa: E402
from fetalface.metrics import grid_loss, paired_t_test, plane_angle_error, so3_geodesic  # noqa: E402
from fetalface.pipeline import run_iterative_standardization  # noqa: E402
from fetalface.plane_fit import (FitConfig, assign_landmarks, fit_orthogonal_planes,  # noqa: E402
                                 homogenize_normals)
from fetalface.preprocess import _otsu_from_counts, otsu_bin  # noqa: E402
from fetalface.resample import generate_grid, resample, standardize_volume  # noqa: E402
from fetalface.shape_model import build_toy_model, complete_landmarks, complete_shape, reconstruct  # noqa: E402
from fetalface.synth import (PhantomSpec, corrupt_until_valid, make_canonical_phantom,  # noqa: E402
                             make_training_shapes, make_voxel_phantom, shape_from_coefficients)
from fetalface.transform import (RigidTransform, euler_rotation, invert, quaternion_from_rotation,  # noqa: E402
                                 quaternion_to_rotation, split_transform)
from oracles import (grid_loss_gradient_check, otsu_brute_force, quaternion_angle_deg,  # noqa: E402
                     rotation_scipy)

RESULTS = []


def _report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _random_rotations(rng, n):
    q = rng.standard_normal((n, 4))
    return quaternion_to_rotation(q / np.linalg.norm(q, axis=1, keepdims=True))


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(1)


def _fit(lms, config=None):
    points, _ = assign_landmarks(lms)
    return homogenize_normals(fit_orthogonal_planes(points, config), lms)


def _toy():
    training = make_training_shapes(50, modes=3, seed=0)
    return training, build_toy_model(training.shapes)


def test_c01_canonical_plane_fit():
    lms, truth = make_canonical_phantom()
    t0 = time.perf_counter()
    fit = _fit(lms)
    elapsed = time.perf_counter() - t0
    ang = np.radians(plane_angle_error(fit.normals, truth.normals, signed=True)).max()
    cen = np.linalg.norm(fit.center - truth.center)
    ok = ang < 1e-5 and cen < 1e-5 and fit.residual < 1e-6 and elapsed < 1.0
    _report(1, "canonical plane fit", ok,
            f"normal {ang:.2e} rad, center {cen:.2e} mm, residual {fit.residual:.2e}, {elapsed:.3f} s")


def test_c02_rigid_equivariance():
    lms, truth = make_canonical_phantom()
    rng = np.random.default_rng(2)
    Rs = _random_rotations(rng, 200)
    ts = rng.uniform(-100, 100, (200, 3))
    rates = {}
    t0 = time.perf_counter()
    for restarts in (8, 1):
        good = 0
        for k, (R, t) in enumerate(zip(Rs, ts)):
            posed = lms.map_points(lambda p: p @ R.T + t)
            fit = _fit(posed, FitConfig(restarts=restarts, seed=k))
            expect = truth.transformed(R, t)
            ang = np.radians(plane_angle_error(fit.normals, expect.normals, signed=True)).max()
            good += ang < 1e-4 and np.linalg.norm(fit.center - expect.center) < 1e-4
        rates[restarts] = good / 200
    elapsed = time.perf_counter() - t0
    ok = rates[8] >= 0.99 and rates[1] >= 0.90 and elapsed < 60
    _report(2, "rigid equivariance, 200 poses", ok,
            f"8 restarts {rates[8]:.1%}, 1 restart {rates[1]:.1%}, {elapsed:.1f} s")


def test_c03_completion_oracle():
    training, model = _toy()
    rng = np.random.default_rng(3)
    exact, noisy = [], []
    for k in range(200):
        alpha = rng.uniform(-2, 2, model.n_modes) * np.sqrt(model.eigenvalues)
        R = _random_rotations(rng, 1)[0]
        shape = reconstruct(model, alpha).reshape(-1, 3) @ R.T + rng.uniform(-20, 20, 3)
        hidden = rng.choice(19, 5, replace=False)
        visible = np.ones(19, bool)
        visible[hidden] = False
        if k < 50:
            res = complete_shape(model, shape, visible, wp=0.0, rounds=100)
            exact.append(np.linalg.norm(res.shape[hidden] - shape[hidden], axis=1).max())
        obs = shape + rng.normal(0, 0.5, shape.shape)
        res = complete_shape(model, obs, visible, wp=1.0)
        noisy.append(np.linalg.norm(res.shape[hidden] - shape[hidden], axis=1).mean())
    worst, med = max(exact), float(np.median(noisy))
    ok = worst < 1e-6 and med < 2.0
    _report(3, "landmark completion", ok,
            f"noiseless max {worst:.2e} mm (50 shapes), noisy median {med:.3f} mm (200 trials)")


def test_c04_completion_reduces_plane_error():
    training, model = _toy()
    rng = np.random.default_rng(4)
    cfg = FitConfig(restarts=2)
    on_a, off_a, on_t, off_t = [], [], [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(200):
            shape = shape_from_coefficients(training, rng.standard_normal(3) * training.mode_sd)
            lms = LandmarkSet.from_dict(dict(zip(MODEL_LANDMARKS, shape)))
            truth = _fit(lms, cfg)
            obs = corrupt_until_valid(lms, PhantomSpec(seed=int(rng.integers(1 << 31)),
                                                       noise_sigma=1.0, hidden=4))
            off = _fit(obs, cfg)
            on = _fit(complete_landmarks(model, obs, wp=1.0), cfg)
            on_a.append(plane_angle_error(on.normals, truth.normals).mean())
            off_a.append(plane_angle_error(off.normals, truth.normals).mean())
            on_t.append(np.linalg.norm(on.center - truth.center))
            off_t.append(np.linalg.norm(off.center - truth.center))
    ma, mb = np.median(on_a), np.median(off_a)
    ta, tb = np.median(on_t), np.median(off_t)
    ok = ma < mb and ta < tb
    _report(4, "completion lowers plane error", ok,
            f"angle {mb:.2f} -> {ma:.2f} deg, center {tb:.2f} -> {ta:.2f} mm (median, 200 trials)")


def test_c05_quaternion_round_trip():
    rng = np.random.default_rng(5)
    R = _random_rotations(rng, 1_000_000)
    err = np.abs(quaternion_to_rotation(quaternion_from_rotation(R)) - R).max()
    axes = rng.standard_normal((1000, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    ang = np.pi - rng.uniform(0, 1e-5, 1000)
    q = np.concatenate([np.cos(ang / 2)[:, None], np.sin(ang / 2)[:, None] * axes], axis=1)
    Rn = quaternion_to_rotation(q)
    err_n = np.abs(quaternion_to_rotation(quaternion_from_rotation(Rn)) - Rn).max()
    ok = err < 1e-10 and err_n < 1e-10
    _report(5, "quaternion round trip", ok, f"1e6 random {err:.2e}, 1e3 near 180 deg {err_n:.2e}")


def test_c06_grid_loss_gradient():
    rng = np.random.default_rng(6)
    grid = generate_grid((16, 16, 16)).reshape(-1, 3)
    worst = 0.0
    for _ in range(500):
        gt = RigidTransform.from_rotation(_random_rotations(rng, 1)[0], rng.uniform(-0.3, 0.3, 3))
        p = np.concatenate([rng.standard_normal(4), rng.uniform(-0.3, 0.3, 3)])
        inv = invert(gt)
        target = grid @ inv.rotation.T + inv.translation
        _, grad = grid_loss(p, gt, grid)
        fd = grid_loss_gradient_check(lambda x: grid_loss(x, gt, grid, with_grad=False),
                                      lambda x: grid @ rotation_scipy(x[:4]).T + x[4:] - target, p)
        worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    _report(6, "grid-loss gradient vs finite differences", worst < 1e-5,
            f"max relative error {worst:.2e} over 500 pairs")


def test_c07_grid_loss_identity():
    rng = np.random.default_rng(7)
    grid = generate_grid((16, 16, 16)).reshape(-1, 3)
    worst = 0.0
    for _ in range(100):
        theta = RigidTransform.from_rotation(_random_rotations(rng, 1)[0], rng.uniform(-0.5, 0.5, 3))
        worst = max(worst, grid_loss(invert(theta), theta, grid, with_grad=False))
    shift = grid_loss(RigidTransform([1, 0, 0, 0], [0.3, 0, 0]), RigidTransform.identity(), grid,
                      with_grad=False)
    ok = worst < 1e-12 and abs(shift - 0.1) < 1e-12
    _report(7, "grid-loss identity", ok, f"max L(inv, theta) {worst:.2e}, shift case {shift:.15f}")


def test_c08_resampling_round_trip():
    rng = np.random.default_rng(8)
    pose = RigidTransform.from_rotation(euler_rotation(rng.uniform(-20, 20, 3)), rng.uniform(-0.05, 0.05, 3))
    canon, _ = make_voxel_phantom((128, 128, 128))
    with _single_thread():
        t0 = time.perf_counter()
        back = resample(resample(canon, invert(pose)), pose).data
        elapsed = time.perf_counter() - t0
    inner = (slice(2, -2),) * 3
    rel = np.abs(back[inner] - canon.data[inner]).mean() / np.ptp(canon.data)
    ok = rel < 0.02 and elapsed < 10
    _report(8, "resampling round trip at 128^3", ok, f"mean abs diff {rel:.3%} of range, {elapsed:.2f} s")


def test_c09_iterative_composition():
    rng = np.random.default_rng(9)
    gt = RigidTransform.from_rotation(euler_rotation(rng.uniform(-20, 20, 3)), rng.uniform(-0.05, 0.05, 3))
    vol, _ = make_voxel_phantom((64, 64, 64), gt)
    single, _ = standardize_volume(vol, gt)
    out, _, _, _ = run_iterative_standardization(vol, [split_transform(gt, 3)] * 3, 3)
    rel = np.abs(out.data - single.data).mean() / np.ptp(single.data)
    _report(9, "three slerp steps vs single shot", rel < 0.005, f"mean abs diff {rel:.2e} of range")


def test_c10_otsu_oracle():
    rng = np.random.default_rng(10)
    agree = 0
    for k in range(50):
        if k % 2:
            counts = rng.integers(0, 100, 256) * (rng.random(256) < rng.uniform(0.1, 1))
            counts[rng.integers(256)] += 1
            counts[rng.integers(256)] += 1
            agree += _otsu_from_counts(counts) == otsu_brute_force(counts)
        else:
            n = rng.integers(2, 5)
            samples = np.concatenate([rng.normal(rng.uniform(0, 255), rng.uniform(2, 30), rng.integers(100, 5000))
                                      for _ in range(n)])
            counts = np.histogram(samples, bins=256, range=(samples.min(), samples.max()))[0]
            agree += otsu_bin(samples) == otsu_brute_force(counts)
    _report(10, "Otsu vs exhaustive search", agree == 50, f"{agree}/50 exact bin agreement")


def test_c11_metrics_self_consistency():
    rng = np.random.default_rng(11)
    R1, R2 = _random_rotations(rng, 10_000), _random_rotations(rng, 10_000)
    err = np.abs(so3_geodesic(R1, R2) - quaternion_angle_deg(quaternion_from_rotation(R1),
                                                             quaternion_from_rotation(R2))).max()
    a = np.array([12.1, 14.3, 11.8, 15.2, 13.0, 12.7, 14.9, 13.3, 12.2, 14.0])
    b = np.array([11.4, 13.9, 12.0, 14.1, 12.2, 12.9, 13.8, 12.5, 11.9, 13.1])
    d = a - b
    t_hand = d.mean() / (d.std(ddof=1) / np.sqrt(d.size))
    t, _, _ = paired_t_test(a, b)
    ok = err < 1e-8 and abs(t - t_hand) < 1e-6
    _report(11, "metric self-consistency", ok, f"geodesic max diff {err:.2e} deg, t diff {abs(t - t_hand):.2e}")


def test_c12_pipeline_determinism(tmp_path):
    with contextlib.redirect_stdout(None):
        cli_main(["synth", "--kind", "model", "--seed", "1", "--out", str(tmp_path / "m")])
        cli_main(["synth", "--kind", "volume", "--seed", "2", "--dims", "48", "48", "48",
                  "--out", str(tmp_path / "v")])
    args = ["pipeline", "--landmarks", str(tmp_path / "v" / "landmarks.csv"),
            "--model", str(tmp_path / "m" / "model.npz"), "--volume", str(tmp_path / "v" / "volume.mhd"),
            "--out", str(tmp_path / "run"), "--figure"]
    snapshots, codes = [], []
    for _ in range(2):
        with contextlib.redirect_stdout(None):
            codes.append(cli_main(args))
        snapshots.append({p.name: p.read_bytes() for p in sorted((tmp_path / "run").iterdir())})
    ok = codes == [0, 0] and snapshots[0] == snapshots[1] and len(snapshots[0]) >= 10
    _report(12, "pipeline determinism", ok, f"{len(snapshots[0])} files byte-identical across reruns, exit {codes}")


if __name__ == "__main__":
    import tempfile
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    print(f"\n{12 - failed}/12 criteria passed")
    sys.exit(1 if failed else 0)
