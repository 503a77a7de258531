"""Synthetic ground truth: landmark phantoms, training shapes and voxel phantoms.

Canonical frame: ``+x`` is the subject's right, ``+y`` anterior (out of the
face), ``+z`` superior.  The sagittal plane is ``x = 0``, the coronal plane
``y = 0`` and the axial plane ``z = 0``; they meet at the origin.  Every
plane-defining landmark lies exactly on its plane and every orientation
landmark sits on its expected side, so the canonical triple is
``normals = I, center = 0``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError
from .landmarks import MODEL_LANDMARKS, PLANE_ASSIGNMENT, LandmarkSet
from .plane_fit import PlaneTriple, assign_landmarks
from .transform import RigidTransform, euler_rotation
from .volume import Volume, VolumeMeta, normalized_scale, normalized_to_physical

#: Phantom landmark coordinates in mm at scale 1 (a toy face, not anatomy data).
PHANTOM_LANDMARKS = {
    "exR": (18.0, -8.0, 10.0),
    "exL": (-18.0, -8.0, 10.0),
    "enR": (8.0, 0.0, 10.0),
    "enL": (-8.0, 0.0, 10.0),
    "n": (0.0, 4.0, 14.0),
    "aR": (9.0, 9.0, 0.0),
    "aL": (-9.0, 9.0, 0.0),
    "acR": (11.0, 5.0, 0.0),
    "acL": (-11.0, 5.0, 0.0),
    "prn": (0.0, 16.0, 0.0),
    "sn": (0.0, 10.0, 0.0),
    "chR": (12.0, 0.0, -14.0),
    "chL": (-12.0, 0.0, -14.0),
    "cphR": (3.0, 9.0, -4.0),
    "cphL": (-3.0, 9.0, -4.0),
    "ls": (0.0, 10.0, -8.0),
    "li": (0.0, 9.0, -17.0),
    "sl": (0.0, 6.0, -22.0),
    "pg": (0.0, 0.0, -28.0),
}


def phantom_array(scale=1.0):
    """(19, 3) phantom coordinates in model-landmark order."""
    return scale * np.array([PHANTOM_LANDMARKS[n] for n in MODEL_LANDMARKS])


def make_canonical_phantom(scale=1.0):
    """Canonical landmark set and its exact plane triple."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    pts = phantom_array(scale)
    lms = LandmarkSet.from_dict(dict(zip(MODEL_LANDMARKS, pts)))
    counts = tuple(len(PLANE_ASSIGNMENT[p]) for p in ("sagittal", "coronal", "axial"))
    return lms, PlaneTriple(np.eye(3), np.zeros(3), 0.0, counts)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    scale: float = 1.0
    noise_sigma: float = 0.0
    hidden: int = 0
    pose: RigidTransform = None  # similarity pose in mm; None = identity
    dims: tuple = (64, 64, 64)

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if not 0 <= self.hidden <= 15:
            raise ValueError("hidden count must be in [0, 15]")


def random_pose(rng, max_angle_deg=20.0, max_translation=0.05, extent_mm=None):
    """Rigid pose with Euler angles in +-max_angle and translation in +-max_translation.

    The translation is in normalized units, converted to mm by ``extent_mm``
    (half the volume side) when given.
    """
    R = euler_rotation(rng.uniform(-max_angle_deg, max_angle_deg, 3))
    t = rng.uniform(-max_translation, max_translation, 3)
    if extent_mm is not None:
        t = t * extent_mm
    return RigidTransform.from_rotation(R, t)


def corrupt(landmarks, spec, strict=True, names=MODEL_LANDMARKS):
    """Pose, noise and hide landmarks, deterministically from ``spec.seed``.

    The pose is applied as ``p -> R p + t`` in mm.  Noise is isotropic
    Gaussian.  Hidden landmarks are drawn uniformly without replacement from
    the visible ``names``; in strict mode a draw that would leave a plane
    under-determined raises ``CorruptionError``.
    """
    rng = np.random.default_rng(spec.seed)
    pose = spec.pose or RigidTransform.identity()
    out = landmarks
    if spec.pose is not None:
        out = out.map_points(pose.apply)
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=out.positions.shape)
        out = out.map_points(lambda p: p + noise[out.visible])
    if spec.hidden:
        candidates = [n for n in names if out.is_visible(n)]
        hide = rng.choice(len(candidates), size=spec.hidden, replace=False)
        out = out.hide([candidates[i] for i in sorted(hide)])
        if strict:
            _, flagged = assign_landmarks(out, strict=False)
            if flagged:
                raise CorruptionError("hiding leaves plane(s) under-determined: " + ", ".join(flagged))
    return out


def corrupt_until_valid(landmarks, spec, max_tries=1000):
    """``corrupt`` with derived seeds until every plane stays determined."""
    for k in range(max_tries):
        try:
            return corrupt(landmarks, PhantomSpec(
                seed=int(np.random.SeedSequence([spec.seed, k]).generate_state(1)[0]),
                scale=spec.scale, noise_sigma=spec.noise_sigma, hidden=spec.hidden,
                pose=spec.pose, dims=spec.dims))
        except CorruptionError:
            continue
    raise CorruptionError("no valid corruption found")


#: Standard deviations (mm) of the generator's deformation modes, largest first.
DEFAULT_MODE_SD = (4.0, 2.5, 1.5, 1.0, 0.6)
_MODE_SEED = 20240611


@dataclass(frozen=True)
class TrainingSet:
    """Training shapes plus the generator that produced them."""

    shapes: np.ndarray  # (count, 19, 3)
    modes: np.ndarray  # (57, K) orthonormal deformation directions
    mode_sd: np.ndarray  # nominal SD per mode (mm)
    coefficients: np.ndarray  # (count, K)

    @property
    def nominal_spectrum(self):
        return self.mode_sd ** 2

    @property
    def realized_spectrum(self):
        """Eigenvalues of the sample covariance of the drawn coefficients."""
        c = self.coefficients - self.coefficients.mean(axis=0)
        cov = c.T @ c / (len(c) - 1)
        return np.sort(np.linalg.eigvalsh(cov))[::-1]


def deformation_modes(count, base=None):
    """Fixed orthonormal deformation directions, orthogonal to similarity motions.

    Directions are drawn from a constant seed and stripped of translation,
    rotation and scaling components of ``base`` (the phantom by default).
    """
    base = phantom_array() if base is None else np.asarray(base, dtype=float)
    centered = base - base.mean(axis=0)
    gens = []
    for k in range(3):
        t = np.zeros_like(base)
        t[:, k] = 1.0
        gens.append(t.ravel())
        axis = np.zeros(3)
        axis[k] = 1.0
        gens.append(np.cross(axis, centered).ravel())
    gens.append(centered.ravel())
    G, _ = np.linalg.qr(np.array(gens).T)
    rng = np.random.default_rng(_MODE_SEED)
    raw = rng.standard_normal((base.size, count))
    raw -= G @ (G.T @ raw)
    modes, r = np.linalg.qr(raw)
    return modes * np.sign(np.diag(r))


def make_training_shapes(count, modes=3, seed=0, mode_sd=None):
    """Phantom plus ``modes`` linear deformations with Gaussian coefficients."""
    if count < modes + 1:
        raise ValueError("count must be at least modes + 1")
    sd = np.asarray(DEFAULT_MODE_SD[:modes] if mode_sd is None else mode_sd, dtype=float)
    if sd.size != modes:
        raise ValueError("mode_sd must have one entry per mode")
    dirs = deformation_modes(modes)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((count, modes)) * sd
    shapes = phantom_array()[None] + (coeffs @ dirs.T).reshape(count, -1, 3)
    return TrainingSet(shapes, dirs, sd, coeffs)


def shape_from_coefficients(training, coefficients):
    return phantom_array() + (training.modes @ np.asarray(coefficients, dtype=float)).reshape(-1, 3)


# Voxel phantom: smooth blobs in the canonical mm frame, (center, radii, amplitude).
# Deliberately lopsided (ear bump on one side, uneven eyes, off-center nose)
# so no rotation maps it onto itself.
_BLOBS = (
    ((0.0, -4.0, 2.0), (30.0, 34.0, 38.0), 1.0),     # head
    ((1.5, 12.0, 0.0), (5.0, 9.0, 6.0), 1.5),         # nose
    ((12.0, 4.0, 10.0), (6.0, 4.0, 4.0), -0.6),       # right eye
    ((-11.0, 5.0, 11.0), (4.5, 3.5, 3.5), -0.4),      # left eye
    ((0.0, 6.0, -24.0), (10.0, 8.0, 7.0), 0.8),       # chin
    ((31.0, -6.0, 3.0), (4.0, 7.0, 9.0), 1.2),        # right ear
    ((-8.0, -20.0, 30.0), (9.0, 9.0, 6.0), 0.5),      # crown bump
)
_EDGE_MM = 2.0


def phantom_density(points_mm):
    """Smooth phantom intensity at canonical-frame points (..., 3) in mm."""
    p = np.asarray(points_mm, dtype=float)
    out = np.zeros(p.shape[:-1])
    for center, radii, amp in _BLOBS:
        d = (p - np.asarray(center)) / np.asarray(radii)
        r = np.sqrt((d * d).sum(axis=-1))
        # signed distance to the ellipsoid surface, approximated in mm
        dist = (1.0 - r) * min(radii)
        out += amp / (1.0 + np.exp(-np.clip(dist / (0.25 * _EDGE_MM), -60, 60)))
    return out


def phantom_meta(dims=(64, 64, 64), fov_mm=128.0):
    """Isotropic metadata with the volume center at physical ``(0, 0, 0)``."""
    n = np.asarray(dims, dtype=float)
    spacing = fov_mm / n.max()
    return VolumeMeta(tuple(int(d) for d in dims), (spacing,) * 3,
                      tuple(-spacing * (n - 1) / 2.0))


def make_voxel_phantom(dims=(64, 64, 64), pose=None, fov_mm=128.0):
    """Render the phantom under ``pose`` and return ``(volume, standardizing transform)``.

    ``pose`` is a ``RigidTransform`` in normalized coordinates mapping the
    canonical frame into the volume; resampling the rendered volume with it
    gives back the canonical rendering, so it is also the returned transform.
    """
    pose = pose or RigidTransform.identity()
    meta = phantom_meta(dims, fov_mm)
    k = normalized_scale(meta)[0]
    R, t = pose.rotation, pose.translation
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in meta.dims]
    gy, gz = np.meshgrid(axes[1], axes[2], indexing="ij")
    data = np.empty(meta.dims)
    for i, x in enumerate(axes[0]):
        u = np.stack([np.full_like(gy, x), gy, gz], axis=-1)
        canonical = (u - t) @ R  # R^T (u - t)
        data[i] = phantom_density(canonical / k)
    return Volume(data, meta.spacing, meta.origin), pose


def posed_landmarks(pose, meta, scale=1.0):
    """Canonical landmarks placed into a volume by a normalized-frame pose."""
    k = normalized_scale(meta)[0]
    lms, _ = make_canonical_phantom(scale)
    return lms.map_points(lambda p: normalized_to_physical(pose.apply(p * k), meta))
