import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fetalface.errors import DegenerateInputError, InsufficientLandmarksError, ModelFormatError
from fetalface.io_formats import write_model
from fetalface.landmarks import MODEL_LANDMARKS
from fetalface.shape_model import (build_toy_model, complete_landmarks, complete_shape,
                                   fit_shape_params, procrustes_align, reconstruct)
from fetalface.synth import make_training_shapes, phantom_array
from fetalface.transform import euler_rotation
from oracles import umeyama


@pytest.fixture(scope="module")
def training():
    return make_training_shapes(50, modes=3, seed=0)


@pytest.fixture(scope="module")
def model(training):
    return build_toy_model(training.shapes)


def test_procrustes_identity():
    x = phantom_array()
    T = procrustes_align(x, x)
    assert T.scale == pytest.approx(1.0)
    assert np.allclose(T.rotation, np.eye(3)) and np.allclose(T.translation, 0, atol=1e-12)


def test_procrustes_scaled_and_shifted():
    target = phantom_array()
    source = 2.0 * target + np.array([1.0, 0, 0])
    T = procrustes_align(source, target)
    assert T.scale == pytest.approx(0.5)
    assert np.allclose(T.translation, [-0.5, 0, 0], atol=1e-12)
    assert np.abs(T.apply(source) - target).max() < 1e-12


@given(st.lists(st.floats(-180, 180), min_size=3, max_size=3), st.floats(0.2, 5.0),
       st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_procrustes_matches_umeyama(angles, s, t):
    rng = np.random.default_rng(0)
    src = phantom_array() + rng.normal(0, 0.5, (19, 3))
    dst = s * src @ euler_rotation(angles).T + np.array(t) + rng.normal(0, 0.5, (19, 3))
    T = procrustes_align(src, dst)
    s_ref, R_ref, t_ref = umeyama(src, dst)
    assert T.scale == pytest.approx(s_ref, rel=1e-9)
    assert np.allclose(T.rotation, R_ref, atol=1e-9)
    assert np.allclose(T.translation, t_ref, atol=1e-7)


def test_procrustes_rigid_keeps_scale():
    x = phantom_array()
    assert procrustes_align(3 * x, x, scale=False).scale == 1.0


def test_procrustes_collinear():
    line = np.outer(np.arange(3.0), [1, 2, 3])
    with pytest.raises(DegenerateInputError):
        procrustes_align(line, line)


def test_fit_params_at_mean(model):
    visible = np.ones(19, bool)
    assert np.allclose(fit_shape_params(model, model.mean_shape(), visible, wp=1.0), 0.0, atol=1e-12)


def test_fit_params_recovers_alpha(model):
    alpha = np.array([1.5, -2.0, 0.7])
    visible = np.ones(19, bool)
    visible[[0, 5, 9]] = False
    x = reconstruct(model, alpha).reshape(-1, 3)[visible]
    assert np.abs(fit_shape_params(model, x, visible, wp=0.0) - alpha).max() < 1e-8


def test_fit_params_shrink_with_prior(model):
    alpha = np.array([3.0, -2.0, 1.0])
    visible = np.ones(19, bool)
    x = reconstruct(model, alpha).reshape(-1, 3)
    norms = [np.linalg.norm(fit_shape_params(model, x, visible, wp)) for wp in (1e-2, 1, 1e2, 1e4)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_reconstruct_linear(model):
    assert np.array_equal(reconstruct(model, np.zeros(3)), model.mean)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        assert np.allclose(reconstruct(model, e), model.mean + model.basis[:, i])


def test_reconstruct_fit_round_trip_on_visible(model):
    alpha = np.array([-1.0, 0.5, 2.0])
    visible = np.zeros(19, bool)
    visible[::2] = True
    x = reconstruct(model, alpha).reshape(-1, 3)[visible]
    back = reconstruct(model, fit_shape_params(model, x, visible, 0.0)).reshape(-1, 3)[visible]
    assert np.abs(back - x).max() < 1e-8


def _posed_model_shape(model, alpha, angles=(20, -35, 50), scale=1.3, shift=(4, -7, 2)):
    shape = reconstruct(model, alpha).reshape(-1, 3)
    return scale * shape @ euler_rotation(angles).T + np.array(shift)


def test_completion_hidden_recovery(model):
    rng = np.random.default_rng(3)
    for _ in range(10):
        alpha = rng.uniform(-2, 2, 3) * np.sqrt(model.eigenvalues)
        truth = _posed_model_shape(model, alpha)
        visible = np.ones(19, bool)
        visible[rng.choice(19, 5, replace=False)] = False
        res = complete_shape(model, truth, visible, wp=0.0, rounds=100)
        assert np.abs(res.shape - truth).max() < 1e-6


def test_completion_all_visible_preserved(model, training):
    from fetalface.landmarks import LandmarkSet
    alpha = np.array([1.0, 1.0, -1.0])
    truth = _posed_model_shape(model, alpha)
    lms = LandmarkSet.from_dict(dict(zip(MODEL_LANDMARKS, truth)))
    filled = complete_landmarks(model, lms, wp=0.0, rounds=100)
    assert filled == lms
    res = complete_shape(model, truth, np.ones(19, bool), wp=0.0, rounds=100)
    assert np.abs(res.shape - truth).max() < 1e-6


def test_completion_precondition(model):
    visible = np.zeros(19, bool)
    visible[:3] = True
    with pytest.raises(InsufficientLandmarksError):
        complete_shape(model, phantom_array(), visible)


def test_completion_keeps_visible_verbatim(model):
    from fetalface.landmarks import LandmarkSet
    rng = np.random.default_rng(9)
    pts = phantom_array() + rng.normal(0, 1, (19, 3))
    lms = LandmarkSet.from_dict(dict(zip(MODEL_LANDMARKS, pts))).hide(["prn", "chL"])
    filled = complete_landmarks(model, lms)
    for n in lms.visible_names:
        assert np.array_equal(filled.position(n), lms.position(n))
    assert filled.is_visible("prn") and filled.is_visible("chL")


def test_toy_model_spectrum(model, training):
    assert model.n_modes == 3
    realized = training.realized_spectrum
    assert np.all(np.abs(model.eigenvalues - realized) / realized < 0.15)
    assert np.allclose(model.basis.T @ model.basis, np.eye(3), atol=1e-10)


def test_toy_model_single_mode(training):
    m = build_toy_model(training.shapes, n_modes=1)
    assert m.basis.shape == (57, 1)


def test_identical_shapes_rejected_on_write(tmp_path):
    shapes = np.repeat(phantom_array()[None], 5, axis=0)
    model = build_toy_model(shapes, n_modes=2)
    with pytest.raises(ModelFormatError):
        write_model(model, tmp_path / "m.npz")
