"""PCA landmark model and landmark completion.

Shapes are flattened landmark-major: ``x = [x1, y1, z1, x2, ...]`` so a
(N, 3) array reshapes directly to the 3N vector.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateInputError, InsufficientLandmarksError, ModelFormatError,
                     SingularSystemError)
from .landmarks import MODEL_LANDMARKS, index_of

logger = logging.getLogger(__name__)

MIN_VISIBLE = 4


@dataclass(frozen=True)
class MorphableModel:
    """Mean shape, orthonormal PCA basis (columns) and eigenvalues."""

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    names: tuple = MODEL_LANDMARKS

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        basis = np.array(self.basis, dtype=float)
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        names = tuple(str(n) for n in self.names)
        if basis.ndim == 1:
            basis = basis[:, None]
        if mean.size != 3 * len(names):
            raise ModelFormatError(f"mean has {mean.size} entries, expected 3N = {3 * len(names)}")
        if basis.shape[0] != mean.size:
            raise ModelFormatError(f"basis has {basis.shape[0]} rows, expected {mean.size}")
        if basis.shape[1] != lam.size:
            raise ModelFormatError(
                f"basis has {basis.shape[1]} columns but there are {lam.size} eigenvalues")
        if len(set(names)) != len(names):
            raise ModelFormatError("duplicate landmark names in model")
        for n in names:
            index_of(n)
        for a in (mean, basis, lam):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "names", names)

    @property
    def n_landmarks(self):
        return len(self.names)

    @property
    def n_modes(self):
        return self.eigenvalues.size

    def check(self):
        """Raise ``ModelFormatError`` unless eigenvalues are positive and modes orthogonal."""
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.basis)):
            raise ModelFormatError("model arrays must be finite")
        if not np.all(self.eigenvalues > 0):
            raise ModelFormatError("eigenvalues must be strictly positive")
        gram = self.basis.T @ self.basis
        scale = max(np.abs(np.diag(gram)).max(), 1e-300)
        off = gram - np.diag(np.diag(gram))
        if np.abs(off).max(initial=0.0) >= 1e-6 * scale:
            raise ModelFormatError("basis columns are not mutually orthogonal")
        return self

    def mean_shape(self):
        return self.mean.reshape(-1, 3)


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * R p + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return SimilarityTransform(1.0 / self.scale, Rt, -(Rt @ self.translation) / self.scale)


def _check_configuration(points):
    if len(points) < 3:
        raise DegenerateInputError(f"Procrustes needs >= 3 points, got {len(points)}")
    sv = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateInputError("Procrustes configuration is collinear")


def procrustes_align(source, target, scale=True):
    """Similarity (or rigid) transform taking ``source`` onto ``target`` in least squares.

    Closed form via the SVD of the cross-covariance, with the reflection
    removed so the rotation is proper.
    """
    x = np.asarray(source, dtype=float).reshape(-1, 3)
    y = np.asarray(target, dtype=float).reshape(-1, 3)
    if x.shape != y.shape:
        raise ValueError("source and target must have the same shape")
    _check_configuration(x)
    _check_configuration(y)
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    u, d, vt = np.linalg.svd(yc.T @ xc)
    S = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        S[2] = -1.0
    R = (u * S) @ vt
    s = float((d * S).sum() / (xc ** 2).sum()) if scale else 1.0
    return SimilarityTransform(s, R, my - s * R @ mx)


def _restricted(model, visible):
    rows = np.repeat(np.asarray(visible, dtype=bool), 3)
    return model.basis[rows], model.mean[rows]


def fit_shape_params(model, aligned, visible, wp=1.0):
    """Regularized shape parameters for the visible landmarks.

    Solves ``(Phi_r^T Phi_r + wp diag(1/lambda)) a = Phi_r^T (x_r - mean_r)``,
    the exact minimizer of ``|Phi_r a + mean_r - x_r|^2 + wp sum a_i^2/lambda_i``.
    ``aligned`` holds the visible landmarks only, in model order.
    """
    if wp < 0:
        raise ValueError("wp must be non-negative")
    visible = np.asarray(visible, dtype=bool)
    phi, mean = _restricted(model, visible)
    x = np.asarray(aligned, dtype=float).reshape(-1)
    if x.size != mean.size:
        raise ValueError(f"expected {mean.size // 3} visible landmarks, got {x.size // 3}")
    A = phi.T @ phi + wp * np.diag(1.0 / model.eigenvalues)
    b = phi.T @ (x - mean)
    if wp == 0 and np.linalg.matrix_rank(phi) < model.n_modes:
        raise SingularSystemError("visible rows of the basis are rank deficient; use wp > 0")
    try:
        alpha = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularSystemError("singular normal equations; use wp > 0") from None
    resid = np.linalg.norm(A @ alpha - b)
    if resid > 1e-10 * max(np.linalg.norm(b), np.linalg.norm(A) * np.linalg.norm(alpha), 1e-300):
        raise SingularSystemError(f"normal equations solved inaccurately (residual {resid:.3g})")
    return alpha


def shape_objective(model, aligned, visible, alpha, wp):
    phi, mean = _restricted(model, visible)
    r = phi @ alpha + mean - np.asarray(aligned, dtype=float).reshape(-1)
    return float(r @ r + wp * np.sum(np.asarray(alpha) ** 2 / model.eigenvalues))


def reconstruct(model, alpha):
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != model.n_modes:
        raise ValueError(f"alpha has {alpha.size} entries, model has {model.n_modes} modes")
    return model.basis @ alpha + model.mean


@dataclass(frozen=True)
class Completion:
    shape: np.ndarray  # (N, 3) completed, in input space
    alpha: np.ndarray
    pose: SimilarityTransform  # input -> model space
    rounds: int


def complete_shape(model, points, visible, wp=1.0, rounds=2, scale=True, tol=1e-12):
    """Completion on raw arrays.

    ``points`` (N, 3) holds model-ordered positions (invisible rows ignored).
    Round one aligns the visible points to the model mean; later rounds
    re-align them to the current reconstruction and refit, stopping early
    once the reconstruction moves less than ``tol``.
    """
    visible = np.asarray(visible, dtype=bool)
    if visible.sum() < MIN_VISIBLE:
        raise InsufficientLandmarksError(
            f"completion needs >= {MIN_VISIBLE} visible model landmarks, got {visible.sum()}")
    x = np.asarray(points, dtype=float).reshape(-1, 3)[visible]
    target = model.mean_shape()[visible]
    recon = None
    done = 0
    for done in range(1, max(rounds, 1) + 1):
        pose = procrustes_align(x, target, scale=scale)
        alpha = fit_shape_params(model, pose.apply(x), visible, wp)
        new = reconstruct(model, alpha).reshape(-1, 3)
        moved = np.inf if recon is None else np.abs(new - recon).max()
        recon = new
        target = recon[visible]
        if moved < tol:
            break
    shape = pose.inverse().apply(recon)
    logger.debug("completion: %d round(s), wp=%g", done, wp)
    return Completion(shape, alpha, pose, done)


def complete_landmarks(model, landmarks, wp=1.0, rounds=2, scale=True, tol=1e-12):
    """Fill the invisible model landmarks of a ``LandmarkSet``.

    Visible annotations are kept verbatim; only missing slots receive model
    reconstructions.  The result has every model landmark visible.
    """
    idx = [index_of(n) for n in model.names]
    points = landmarks.positions[idx]
    visible = landmarks.visible[idx]
    result = complete_shape(model, points, visible, wp, rounds, scale, tol)
    filled = {n: result.shape[k] for k, n in enumerate(model.names) if not visible[k]}
    return landmarks.with_positions(filled)


def generalized_procrustes(shapes, scale=True, max_iter=100, tol=1e-12):
    """Align shapes (S, N, 3) to their common mean.

    The mean is re-normalized to the average centroid size of the input, so
    coordinates stay in the input units (mm).
    """
    shapes = np.asarray(shapes, dtype=float)
    size = np.mean([np.sqrt(((s - s.mean(0)) ** 2).sum()) for s in shapes])
    mean = shapes[0] - shapes[0].mean(0)
    aligned = shapes.copy()
    for _ in range(max_iter):
        aligned = np.stack([procrustes_align(s, mean, scale).apply(s) for s in shapes])
        new = aligned.mean(axis=0)
        new -= new.mean(axis=0)
        new *= size / np.sqrt((new ** 2).sum())
        # keep the frame of the first mean to avoid drift
        new = procrustes_align(new, mean, scale=False).apply(new)
        if np.abs(new - mean).max() < tol:
            mean = new
            break
        mean = new
    return aligned, mean


def build_toy_model(shapes, n_modes=None, variance=0.98, names=MODEL_LANDMARKS, align=True):
    """PCA model from training shapes (S, N, 3) or ``LandmarkSet`` objects.

    Keeps the smallest number of modes explaining ``variance`` of the total
    unless ``n_modes`` is given.  Identical shapes give a zero eigenvalue,
    which ``MorphableModel.check`` (and hence ``write_model``) rejects.
    """
    if len(shapes) and not isinstance(shapes[0], np.ndarray):
        idx = [index_of(n) for n in names]
        shapes = np.stack([s.positions[idx] for s in shapes])
    shapes = np.asarray(shapes, dtype=float)
    S = len(shapes)
    if S < 2 or (n_modes is not None and S < n_modes + 1):
        raise ValueError(f"need at least M+1 training shapes, got {S}")
    if align:
        shapes, _ = generalized_procrustes(shapes)
    X = shapes.reshape(S, -1)
    mean = X.mean(axis=0)
    _, sv, vt = np.linalg.svd(X - mean, full_matrices=False)
    lam = sv ** 2 / (S - 1)
    # roundoff variance of identical shapes counts as zero
    lam[lam <= 1e-12 * np.mean(X ** 2)] = 0.0
    if n_modes is None:
        total = lam.sum()
        if total <= 0:
            n_modes = 1
        else:
            n_modes = int(np.searchsorted(np.cumsum(lam) / total, variance - 1e-12) + 1)
    n_modes = min(n_modes, len(lam))
    basis = vt[:n_modes].T.copy()
    # deterministic sign: largest-magnitude entry of each mode positive
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(n_modes)])
    basis *= np.where(flip == 0, 1.0, flip)
    return MorphableModel(mean, basis, lam[:n_modes], tuple(names))
