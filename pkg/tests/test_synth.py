import numpy as np
import pytest

from fetalface.errors import CorruptionError
from fetalface.landmarks import MODEL_LANDMARKS
from fetalface.plane_fit import assign_landmarks, fit_orthogonal_planes, homogenize_normals
from fetalface.resample import resample, standardize_volume
from fetalface.synth import (PhantomSpec, corrupt, corrupt_until_valid, make_canonical_phantom,
                             make_training_shapes, make_voxel_phantom, phantom_array,
                             phantom_density, random_pose, shape_from_coefficients)
from fetalface.transform import RigidTransform, euler_rotation


def test_canonical_self_consistency():
    lms, truth = make_canonical_phantom()
    points, _ = assign_landmarks(lms)
    fit = fit_orthogonal_planes(points)
    assert fit.residual < 1e-8
    assert np.abs(homogenize_normals(fit, lms).normals - truth.normals).max() < 1e-8
    assert np.array_equal(homogenize_normals(truth, lms).normals, truth.normals)


def test_scaled_phantom():
    lms, truth = make_canonical_phantom(2.0)
    assert np.array_equal(lms.position("pg"), 2 * np.array([0.0, 0.0, -28.0]))
    assert np.array_equal(truth.normals, np.eye(3))


def test_landmarks_lie_on_their_planes():
    lms, _ = make_canonical_phantom()
    points, _ = assign_landmarks(lms)
    for axis, plane in enumerate(("sagittal", "coronal", "axial")):
        assert np.all(points[plane][:, axis] == 0)


def test_corrupt_identity_and_determinism():
    lms, _ = make_canonical_phantom()
    assert corrupt(lms, PhantomSpec()) == lms
    spec = PhantomSpec(seed=4, noise_sigma=0.5, hidden=3,
                       pose=RigidTransform.from_rotation(euler_rotation([1, 2, 3]), [1, 2, 3]))
    assert corrupt_until_valid(lms, spec) == corrupt_until_valid(lms, spec)
    assert len(corrupt_until_valid(lms, spec).visible_names) == 16


def test_corrupt_noise_level():
    lms, _ = make_canonical_phantom()
    draws = np.array([corrupt(lms, PhantomSpec(seed=s, noise_sigma=0.5)).positions[:19]
                      for s in range(1000)])
    # per axis (x, y, z), pooled over landmarks and draws
    sd = (draws - phantom_array()).reshape(-1, 3).std(axis=0, ddof=1)
    assert np.all(np.abs(sd - 0.5) < 0.05 * 0.5)


def test_corrupt_strict_rejects_underdetermined():
    lms, _ = make_canonical_phantom()
    with pytest.raises(CorruptionError):
        # hiding 15 of 19 always starves some plane
        corrupt(lms, PhantomSpec(seed=0, hidden=15))
    with pytest.raises(ValueError):
        PhantomSpec(hidden=16)


def test_random_pose_bounds():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = random_pose(rng, 20, 0.05)
        assert np.abs(p.translation).max() <= 0.05


def test_training_shapes():
    ts = make_training_shapes(50, modes=3, seed=0)
    assert ts.shapes.shape == (50, 19, 3)
    assert np.array_equal(shape_from_coefficients(ts, np.zeros(3)), phantom_array())
    assert np.allclose(ts.modes.T @ ts.modes, np.eye(3), atol=1e-12)


def test_voxel_phantom_identity():
    vol, t = make_voxel_phantom((32, 32, 32))
    out, _ = standardize_volume(vol, t)
    assert np.abs(out.data - vol.data).max() < 1e-12


def test_voxel_phantom_pose_recovers_canonical():
    canon, _ = make_voxel_phantom((64, 64, 64))
    pose = RigidTransform.from_rotation(euler_rotation([20, -15, 30]), [0.04, -0.03, 0.02])
    posed, t = make_voxel_phantom((64, 64, 64), pose)
    back = resample(posed, t).data
    inner = (slice(2, -2),) * 3
    assert np.abs(back[inner] - canon.data[inner]).mean() < 0.02 * np.ptp(canon.data)


def test_phantom_has_no_rotational_symmetry():
    g = np.linspace(-56, 56, 8)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    f0 = phantom_density(pts)
    rms = np.sqrt(np.mean(f0 ** 2))
    zs = np.arange(-180, 180, 10)
    worst = np.inf
    for x in np.arange(-180, 180, 10):
        for y in np.arange(-90, 91, 10):
            Rs = np.array([euler_rotation([x, y, z]) for z in zs])
            f = phantom_density(np.einsum("rij,nj->rni", Rs, pts))
            d = np.sqrt(np.mean((f - f0) ** 2, axis=1)) / rms
            if x == 0 and y == 0:
                d = d[zs != 0]
            worst = min(worst, d.min())
    assert worst > 0.05


def test_model_landmark_order():
    assert len(MODEL_LANDMARKS) == 19 and phantom_array().shape == (19, 3)
