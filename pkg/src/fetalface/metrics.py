"""Grid loss, pose losses and evaluation metrics."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import DegenerateInputError
from .resample import generate_grid, grid_jacobian, transform_grid
from .transform import (RigidTransform, gt_transform, invert, rotation_and_derivatives,
                        standardizing_transform)


def _params(estimate):
    if isinstance(estimate, RigidTransform):
        return np.concatenate([estimate.quaternion, estimate.translation])
    p = np.asarray(estimate, dtype=float).reshape(7)
    return p


def grid_loss(estimate, gt, grid, with_grad=True, zero_tol=1e-12):
    """Mean absolute difference between ``T_est(g)`` and ``T_gt^-1(g)``.

    The mean runs over all grid points and all three coordinates.
    ``estimate`` is a ``RigidTransform`` or raw ``(q0..q3, tx, ty, tz)``
    (the quaternion is normalized internally, and the gradient accounts for
    it).  Returns ``loss`` or ``(loss, grad)`` with ``grad`` of shape (7,);
    the subgradient of ``|x|`` at 0 is taken as 0, with residuals below
    ``zero_tol`` counted as 0 so the gradient vanishes at an exact match.
    """
    p = _params(estimate)
    pts = np.asarray(grid, dtype=float).reshape(-1, 3)
    R, _ = rotation_and_derivatives(p[:4])
    target = transform_grid(pts, invert(gt))
    diff = pts @ R.T + p[4:] - target
    loss = float(np.abs(diff).mean())
    if not with_grad:
        return loss
    J = grid_jacobian(pts, p[:4])  # (n, 3, 7)
    sign = np.where(np.abs(diff) > zero_tol, np.sign(diff), 0.0)
    grad = np.einsum("na,nak->k", sign, J) / diff.size
    return loss, grad


def so3_geodesic(R1, R2):
    """Rotation angle of ``R1^T R2`` in degrees.

    Uses ``atan2(|axis|, trace - 1)`` which stays accurate near 0 and 180
    degrees, unlike ``arccos((trace - 1) / 2)``.
    """
    R1, R2 = np.asarray(R1, dtype=float), np.asarray(R2, dtype=float)
    M = np.swapaxes(R1, -1, -2) @ R2
    tr = M[..., 0, 0] + M[..., 1, 1] + M[..., 2, 2]
    axis = np.stack([M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0],
                     M[..., 1, 0] - M[..., 0, 1]], axis=-1)
    return np.degrees(np.arctan2(np.linalg.norm(axis, axis=-1), tr - 1.0))


def aggregated_loss(estimate, gt, alpha=1.0, beta=1.0):
    """``alpha * geodesic(rad) + beta * |t_est - t_target|`` against ``invert(gt)``."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    target = invert(gt)
    rot = np.radians(so3_geodesic(estimate.rotation, target.rotation))
    return float(alpha * rot + beta * np.linalg.norm(estimate.translation - target.translation))


def plane_angle_error(n1, n2, signed=False):
    """Angle between plane normals in degrees; sign-invariant unless ``signed``."""
    n1, n2 = np.asarray(n1, dtype=float), np.asarray(n2, dtype=float)
    dot = np.sum(n1 * n2, axis=-1) / (np.linalg.norm(n1, axis=-1) * np.linalg.norm(n2, axis=-1))
    if not signed:
        dot = np.abs(dot)
    return np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))


def translation_error(c1, c2):
    """Euclidean distance between centers (mm); batched over leading axes."""
    return np.linalg.norm(np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float), axis=-1)


def paired_t_test(a, b, alpha=0.01):
    """Two-sided paired t-test -> ``(t, p, p <= alpha)``.

    The p-value uses the regularized incomplete beta identity
    ``p = I_{df/(df+t^2)}(df/2, 1/2)``.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired samples need equal 1-D lengths >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0:
        if np.all(d == 0):
            return 0.0, 1.0, False
        raise DegenerateInputError("differences have zero variance")
    t = float(d.mean() / (sd / np.sqrt(n)))
    df = n - 1
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p, p <= alpha


@dataclass(frozen=True)
class EvalReport:
    """Errors between a predicted and a reference plane triple.

    ``plane_offset_mm`` is the per-plane displacement of the predicted
    center along each reference normal; ``translation_mm`` is the full
    center distance.
    """

    geodesic_deg: float
    plane_angle_deg: tuple  # sagittal, coronal, axial
    translation_mm: float
    plane_offset_mm: tuple
    mean_plane_angle_deg: float
    mean_plane_offset_mm: float
    grid_loss: float = None

    def to_dict(self):
        d = asdict(self)
        d["plane_angle_deg"] = list(self.plane_angle_deg)
        d["plane_offset_mm"] = list(self.plane_offset_mm)
        return d


def evaluate_planes(pred, ref, signed=False, meta=None):
    """Compare two ``PlaneTriple`` objects; ``meta`` enables the grid loss."""
    angles = tuple(float(a) for a in plane_angle_error(pred.normals, ref.normals, signed))
    delta = np.asarray(pred.center) - np.asarray(ref.center)
    offsets = tuple(float(abs(n @ delta)) for n in ref.normals)
    loss = None
    if meta is not None:
        grid = generate_grid((16, 16, 16))
        loss = grid_loss(standardizing_transform(pred, meta), gt_transform(ref, meta), grid,
                         with_grad=False)
    return EvalReport(
        geodesic_deg=float(so3_geodesic(pred.normals, ref.normals)),
        plane_angle_deg=angles,
        translation_mm=float(np.linalg.norm(delta)),
        plane_offset_mm=offsets,
        mean_plane_angle_deg=float(np.mean(angles)),
        mean_plane_offset_mm=float(np.mean(offsets)),
        grid_loss=loss,
    )
