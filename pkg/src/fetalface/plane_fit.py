"""Three mutually orthogonal planes with a shared center, fitted to landmarks.

The objective is the weighted sum of absolute point-to-plane distances::

    f = sum_j w_j * sum_i |n_j . (p_ji - c)|,   j in (sagittal, coronal, axial)

The normals are the rows of the rotation matrix of a quaternion, so the
orthonormality constraints hold by construction and the search is over seven
unconstrained numbers (quaternion + center).  ``|x|`` is smoothed to
``sqrt(x^2 + eps^2)`` and the smoothing is tightened in stages, each stage
warm-started from the previous one.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (FitFailureError, InsufficientLandmarksError,
                     OrientationUndeterminedError)
from .landmarks import ORIENTATION_TABLE, PLANE_ASSIGNMENT, PLANES
from .transform import rotation_and_derivatives

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlaneTriple:
    """Sagittal, coronal and axial normals (rows of ``normals``) and shared center (mm)."""

    normals: np.ndarray
    center: np.ndarray
    residual: float = 0.0
    counts: tuple = ()

    def __post_init__(self):
        n = np.array(self.normals, dtype=float).reshape(3, 3)
        c = np.array(self.center, dtype=float).reshape(3)
        n.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "residual", float(self.residual))
        object.__setattr__(self, "counts", tuple(int(k) for k in self.counts))

    @property
    def sagittal(self):
        return self.normals[0]

    @property
    def coronal(self):
        return self.normals[1]

    @property
    def axial(self):
        return self.normals[2]

    def with_normals(self, normals):
        return PlaneTriple(normals, self.center, self.residual, self.counts)

    def transformed(self, rotation, translation, scale=1.0):
        """Triple after ``p -> scale * rotation @ p + translation``."""
        R = np.asarray(rotation, dtype=float)
        return PlaneTriple(self.normals @ R.T, scale * R @ self.center + translation,
                           scale * self.residual, self.counts)


@dataclass(frozen=True)
class FitConfig:
    weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    eps: float = 1e-6
    restarts: int = 8
    max_iter: int = 500
    tol: float = 1e-12
    seed: int = 0
    # smoothing schedule (mm) run before the final ``eps`` stage
    schedule: tuple = field(default=(1.0, 1e-2, 1e-4))

    def __post_init__(self):
        if len(self.weights) != 3 or min(self.weights) < 0:
            raise ValueError("weights must be three non-negative numbers")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _collinear(points, tol=1e-9):
    if len(points) < 3:
        return True
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] <= tol * max(sv[0], 1e-300)


def assign_landmarks(landmarks, assignment=PLANE_ASSIGNMENT, strict=True):
    """Visible landmark positions per plane.

    Returns ``(points, flagged)`` where ``points`` maps plane name to a (k, 3)
    array and ``flagged`` lists planes with fewer than three non-collinear
    points.  In strict mode any flagged plane raises instead.
    """
    points = {}
    flagged = []
    for plane in PLANES:
        _, pts = landmarks.subset(assignment[plane])
        points[plane] = pts
        if _collinear(pts):
            flagged.append(plane)
    if strict and flagged:
        raise InsufficientLandmarksError(
            "need three non-collinear landmarks on plane(s): " + ", ".join(flagged), flagged)
    return points, tuple(flagged)


def plane_objective(normals, center, point_sets, weights=(1 / 3, 1 / 3, 1 / 3)):
    """Weighted sum of absolute distances (the true, unsmoothed objective)."""
    total = 0.0
    for n, pts, w in zip(np.asarray(normals), point_sets, weights):
        if len(pts):
            total += w * np.abs((np.asarray(pts) - center) @ n).sum()
    return float(total)


class _Objective:
    """Smoothed objective over ``x = (q, c)`` with analytic gradient."""

    def __init__(self, point_sets, weights):
        self.pts = np.vstack([p for p in point_sets if len(p)])
        self.plane = np.concatenate([np.full(len(p), j) for j, p in enumerate(point_sets)])
        self.w = np.asarray(weights, dtype=float)[self.plane]
        self.eps = 1.0

    def __call__(self, x):
        R, dR = rotation_and_derivatives(x[:4])
        diff = self.pts - x[4:]
        r = np.einsum("ij,ij->i", diff, R[self.plane])
        s = np.sqrt(r * r + self.eps ** 2)
        f = float(np.dot(self.w, s))
        g_r = self.w * r / s
        # dr_i/dq_k = dR[k, plane_i, :] . diff_i
        dr_dq = np.einsum("kij,ij->ik", dR[:, self.plane, :], diff)
        g = np.empty(7)
        g[:4] = g_r @ dr_dq
        g[4:] = -(g_r @ R[self.plane])
        return f, g


def _random_quaternions(rng, count):
    q = rng.standard_normal((count, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _polar(R):
    u, _, vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def fit_orthogonal_planes(point_sets, config=None):
    """Fit the plane triple to (sagittal, coronal, axial) point sets.

    Each restart draws a uniform random quaternion for the normals and starts
    the center at the centroid of all points.  The best restart (lowest true
    objective, ties to the lowest restart index) is returned after an exact
    orthonormalization.
    """
    config = config or FitConfig()
    if isinstance(point_sets, dict):
        point_sets = [point_sets[p] for p in PLANES]
    point_sets = [np.asarray(p, dtype=float).reshape(-1, 3) for p in point_sets]
    for plane, pts in zip(PLANES, point_sets):
        if _collinear(pts):
            raise InsufficientLandmarksError(f"plane {plane} needs three non-collinear points",
                                             [plane])

    obj = _Objective(point_sets, config.weights)
    c0 = obj.pts.mean(axis=0)
    scale = max(float(np.sqrt(((obj.pts - c0) ** 2).sum(axis=1).mean())), 1e-12)
    # smoothing stages are expressed relative to the point-cloud size
    stages = [e * scale for e in config.schedule if e * scale > config.eps] + [config.eps]

    rng = np.random.default_rng(config.seed)
    inits = _random_quaternions(rng, config.restarts)
    best = None
    any_converged = False
    for k, q0 in enumerate(inits):
        x = np.concatenate([q0, c0])
        R0, _ = rotation_and_derivatives(q0)
        f_init = plane_objective(R0, c0, point_sets, config.weights)
        converged = True
        for eps in stages:
            obj.eps = eps
            res = minimize(obj, x, jac=True, method="BFGS",
                           options={"maxiter": config.max_iter, "gtol": 1e-10 * scale})
            x = res.x
            x[:4] /= np.linalg.norm(x[:4])
            converged = bool(res.success or res.status == 2)  # 2: precision loss at optimum
        R = _polar(rotation_and_derivatives(x[:4])[0])
        f = plane_objective(R, x[4:], point_sets, config.weights)
        if f > f_init:
            # never return something worse than the starting point of this restart
            R, x[4:], f = R0, c0, f_init
        any_converged |= converged
        logger.debug("restart %d: f=%.3e (init %.3e, converged=%s)", k, f, f_init, converged)
        if best is None or f < best[0]:
            best = (f, R, x[4:].copy())

    f, R, c = best
    triple = PlaneTriple(R, c, f, tuple(len(p) for p in point_sets))
    if not any_converged:
        raise FitFailureError("plane fit did not converge from any restart", best=triple)
    return triple


def homogenize_normals(triple, landmarks, table=ORIENTATION_TABLE):
    """Flip normals so the orientation landmarks fall on their canonical side.

    For each plane the signed offsets ``delta = (p - c) . n`` of the visible
    orientation landmarks are combined into ``sum(positive) - sum(negative)``;
    a negative score flips the normal, a zero score keeps it (with a
    warning).  A left-handed result gets its axial normal flipped.
    """
    normals = triple.normals.copy()
    for j, plane in enumerate(PLANES):
        _, pos = landmarks.subset(table[plane]["positive"])
        _, neg = landmarks.subset(table[plane]["negative"])
        if len(pos) + len(neg) == 0:
            raise OrientationUndeterminedError(
                f"no orientation landmark visible for the {plane} plane", plane)
        n = normals[j]
        score = ((pos - triple.center) @ n).sum() - ((neg - triple.center) @ n).sum()
        if score < 0:
            normals[j] = -n
        elif score == 0:
            warnings.warn(f"{plane} orientation score is exactly zero; normal kept", stacklevel=2)
    if np.linalg.det(normals) < 0:
        warnings.warn("homogenized normals were left-handed; axial normal flipped", stacklevel=2)
        normals[2] = -normals[2]
    return triple.with_normals(normals)
