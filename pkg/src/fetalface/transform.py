"""Rotation, quaternion and rigid-transform algebra.

Quaternions are Hamilton ``(w, x, y, z)`` with the scalar first, stored in the
canonical hemisphere ``w >= 0`` (ties broken by making the first nonzero
component positive).

A ``RigidTransform`` ``(q, t)`` is the 3x4 affine ``theta = [R(q) | t]``
acting on normalized coordinates, ``g -> R g + t``.  Used for resampling it
maps output-grid points to input-volume points.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolationError
from .volume import normalized_scale, normalized_to_physical, physical_to_normalized

_UNIT_TOL = 1e-6


def canonical_quaternion(q):
    """Representative of ``+-q`` in the ``w >= 0`` hemisphere (batched)."""
    q = np.array(q, dtype=float)
    flat = q.reshape(-1, 4)
    # first component whose magnitude is not negligible decides the sign
    nz = np.abs(flat) > 1e-15
    first = np.argmax(nz, axis=1)
    lead = flat[np.arange(len(flat)), first]
    flat *= np.where(lead < 0, -1.0, 1.0)[:, None]
    return flat.reshape(q.shape)


def _check_unit(q):
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > _UNIT_TOL):
        raise InvariantViolationError(f"quaternion is not unit norm (|q| = {norm})")


def quaternion_to_rotation(q):
    """Rotation matrix of a unit quaternion; accepts (..., 4)."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    w, x, y, z = np.moveaxis(q / np.linalg.norm(q, axis=-1, keepdims=True), -1, 0)
    R = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return R.reshape(q.shape[:-1] + (3, 3))


def check_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise InvariantViolationError(f"expected 3x3 matrices, got {R.shape}")
    eye = np.eye(3)
    err = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max(axis=(-2, -1))
    if np.any(err > tol):
        raise InvariantViolationError(f"matrix is not orthonormal (max error {err.max():.3g})")
    if np.any(np.linalg.det(R) < 0):
        raise InvariantViolationError("matrix has determinant -1 (reflection)")


def quaternion_from_rotation(R):
    """Unit quaternion of a rotation matrix, canonical sign; accepts (..., 3, 3).

    Uses the largest-pivot branch among ``(trace, r11, r22, r33)`` so the
    square root argument is always at least 1.
    """
    R = np.asarray(R, dtype=float)
    check_rotation(R)
    m = R.reshape(-1, 3, 3)
    r00, r11, r22 = m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]
    tr = r00 + r11 + r22
    branch = np.argmax(np.stack([tr, r00, r11, r22], axis=1), axis=1)
    q = np.empty((len(m), 4))

    b = branch == 0
    s = 2.0 * np.sqrt(1.0 + tr[b])
    q[b] = np.stack([0.25 * s, (m[b, 2, 1] - m[b, 1, 2]) / s,
                     (m[b, 0, 2] - m[b, 2, 0]) / s, (m[b, 1, 0] - m[b, 0, 1]) / s], axis=1)
    b = branch == 1
    s = 2.0 * np.sqrt(1.0 + r00[b] - r11[b] - r22[b])
    q[b] = np.stack([(m[b, 2, 1] - m[b, 1, 2]) / s, 0.25 * s,
                     (m[b, 0, 1] + m[b, 1, 0]) / s, (m[b, 0, 2] + m[b, 2, 0]) / s], axis=1)
    b = branch == 2
    s = 2.0 * np.sqrt(1.0 - r00[b] + r11[b] - r22[b])
    q[b] = np.stack([(m[b, 0, 2] - m[b, 2, 0]) / s, (m[b, 0, 1] + m[b, 1, 0]) / s,
                     0.25 * s, (m[b, 1, 2] + m[b, 2, 1]) / s], axis=1)
    b = branch == 3
    s = 2.0 * np.sqrt(1.0 - r00[b] - r11[b] + r22[b])
    q[b] = np.stack([(m[b, 1, 0] - m[b, 0, 1]) / s, (m[b, 0, 2] + m[b, 2, 0]) / s,
                     (m[b, 1, 2] + m[b, 2, 1]) / s, 0.25 * s], axis=1)

    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return canonical_quaternion(q).reshape(R.shape[:-2] + (4,))


def rotation_and_derivatives(q):
    """Rotation of ``q / |q|`` and its derivative with respect to raw ``q``.

    Returns ``R`` (3, 3) and ``dR`` (4, 3, 3) with ``dR[k] = dR/dq_k``.  The
    derivative goes through the normalization, so ``q`` need not be unit.
    """
    w, x, y, z = np.asarray(q, dtype=float)
    s = w * w + x * x + y * y + z * z
    M = np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])
    dM = 2.0 * np.array([
        [[w, -z, y], [z, w, -x], [-y, x, w]],
        [[x, y, z], [y, -x, -w], [z, w, -x]],
        [[-y, x, w], [x, y, z], [-w, z, -y]],
        [[-z, -w, x], [w, -z, y], [x, y, z]],
    ])
    R = M / s
    dR = (dM - 2.0 * np.array([w, x, y, z])[:, None, None] * R[None]) / s
    return R, dR


def quaternion_multiply(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def axis_angle_quaternion(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return canonical_quaternion(np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis]))


def slerp(q0, q1, frac):
    """Spherical interpolation along the short arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0:
        q1, dot = -q1, -dot
    if dot > 1 - 1e-12:
        q = q0 + frac * (q1 - q0)
    else:
        omega = np.arccos(dot)
        q = (np.sin((1 - frac) * omega) * q0 + np.sin(frac * omega) * q1) / np.sin(omega)
    return canonical_quaternion(q / np.linalg.norm(q))


def euler_rotation(angles_deg):
    """``Rz @ Ry @ Rx`` for angles about x, y, z in degrees."""
    ax, ay, az = np.deg2rad(angles_deg)
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class RigidTransform:
    """Rotation quaternion plus translation; see module docstring."""

    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.quaternion, dtype=float).reshape(4)
        _check_unit(q)
        q = canonical_quaternion(q / np.linalg.norm(q))
        t = np.array(self.translation, dtype=float).reshape(3)
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0, 0, 0]), np.zeros(3))

    @classmethod
    def from_rotation(cls, R, t=(0.0, 0.0, 0.0)):
        return cls(quaternion_from_rotation(R), t)

    @classmethod
    def from_theta(cls, theta):
        theta = np.asarray(theta, dtype=float).reshape(3, 4)
        return cls.from_rotation(theta[:, :3], theta[:, 3])

    @property
    def rotation(self):
        return quaternion_to_rotation(self.quaternion)

    @property
    def theta(self):
        """The 3x4 affine ``[R | t]``."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self.quaternion, other.quaternion)
                    and np.array_equal(self.translation, other.translation))

    __hash__ = None


def compose(a, b):
    """``a o b``: apply ``b`` first, then ``a``."""
    q = quaternion_multiply(a.quaternion, b.quaternion)
    return RigidTransform(q / np.linalg.norm(q), a.rotation @ b.translation + a.translation)


def invert(a):
    qi = a.quaternion * np.array([1.0, -1, -1, -1])
    return RigidTransform(qi, -(a.rotation.T @ a.translation))


def split_transform(transform, parts):
    """Step ``s`` with ``s o s o ... o s`` (``parts`` times) equal to ``transform``.

    The rotation is slerp-split along its axis; the translation solves
    ``(I + Q + ... + Q^(k-1)) u = t``.
    """
    q = slerp(np.array([1.0, 0, 0, 0]), transform.quaternion, 1.0 / parts)
    Q = quaternion_to_rotation(q)
    acc = np.zeros((3, 3))
    P = np.eye(3)
    for _ in range(parts):
        acc += P
        P = P @ Q
    u = np.linalg.solve(acc, transform.translation)
    return RigidTransform(q, u)


def cumulative_update(accumulated, step, relative_gt):
    """One refinement iteration of the cumulative standardization scheme.

    ``accumulated`` maps output grid to input volume; ``step`` and
    ``relative_gt`` live in the frame of the volume already resampled with
    ``accumulated``.  Rotations follow ``R_acc <- R_acc R_step`` and
    ``R_gt <- R_step^-1 R_gt``; translations are the matching exact
    composition, so ``accumulated o relative_gt`` stays invariant.
    """
    new_acc = compose(accumulated, step)
    new_rel = compose(invert(step), relative_gt)
    return new_acc, new_rel


def random_init(seed, max_angle_deg=20.0, max_translation=0.05):
    """Random starting transform: Euler angles in +-20 deg, translation in +-0.05."""
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-max_angle_deg, max_angle_deg, size=3)
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform.from_rotation(euler_rotation(angles), t)


def rotation_from_normals(triple):
    """Change-of-basis rotation whose rows are the sagittal, coronal, axial normals."""
    normals = getattr(triple, "normals", triple)
    R = np.array(normals, dtype=float).reshape(3, 3)
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > 1e-6:
        raise InvariantViolationError(f"plane normals are not orthonormal (error {err:.3g})")
    if np.linalg.det(R) < 0:
        raise InvariantViolationError("plane normals form a left-handed basis")
    return R


def normalize_translation(center_mm, meta):
    """Physical point (mm) -> normalized coordinates; warns outside [-1, 1]."""
    u = physical_to_normalized(center_mm, meta)
    if np.any(np.abs(u) > 1.0):
        warnings.warn(f"center {np.asarray(center_mm)} lies outside the volume (normalized {u})",
                      stacklevel=2)
    return u


def denormalize_translation(u, meta):
    return normalized_to_physical(u, meta)


def _check_isotropic(meta):
    k = normalized_scale(meta)
    if np.ptp(k) > 1e-9 * k.max():
        warnings.warn("normalized frame is anisotropic for this volume; the rigid transform "
                      "is only approximate in millimetres", stacklevel=3)


def gt_transform(triple, meta):
    """Forward ground-truth transform ``theta_gt = [R_gt | -R_gt c]``.

    Maps input normalized coordinates into the standardized frame, in which
    the plane center sits at the origin and the normals are the axes.
    """
    _check_isotropic(meta)
    R = rotation_from_normals(triple)
    c = normalize_translation(triple.center, meta)
    return RigidTransform.from_rotation(R, -R @ c)


def standardizing_transform(triple, meta):
    """Resampling transform ``invert(theta_gt) = [R_gt^T | c]``."""
    return invert(gt_transform(triple, meta))
