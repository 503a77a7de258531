"""Affine grid sampler with trilinear interpolation.

Output voxel ``g`` (normalized coordinates) takes the value of the input
volume at ``theta @ (g, 1)``.  Normalized coordinate ``k`` addresses array
axis ``k`` (see :mod:`fetalface.volume`).  Voxels outside the input count
as zero, so samples near the border blend towards zero just as they would
against zero padding.
"""

import numpy as np

from .transform import RigidTransform, rotation_and_derivatives
from .volume import Volume, normalized_to_index

_CHUNK = 1 << 20


def generate_grid(dims):
    """Endpoint-inclusive normalized grid of shape ``dims + (3,)``."""
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def transform_grid(grid, transform):
    """Map grid points through a ``RigidTransform`` or a 3x4 ``theta``."""
    theta = transform.theta if isinstance(transform, RigidTransform) else np.asarray(transform)
    return np.asarray(grid) @ theta[:, :3].T + theta[:, 3]


def _sample_indices(data, idx):
    """Trilinear samples of ``data`` at continuous indices ``idx`` (k, 3)."""
    shape = np.array(data.shape)
    base = np.floor(idx)
    frac = idx - base
    base = base.astype(np.int64)
    out = np.zeros(len(idx))
    for corner in range(8):
        offs = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        ii = base + offs
        w = np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=1)
        inside = np.all((ii >= 0) & (ii < shape), axis=1)
        if not inside.any():
            continue
        j = ii[inside]
        out[inside] += w[inside] * data[j[:, 0], j[:, 1], j[:, 2]]
    return out


def trilinear_sample(volume, points):
    """Sample ``volume`` at normalized ``points`` (..., 3) -> values (...)."""
    data = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    data = np.asarray(data, dtype=float)
    points = np.asarray(points, dtype=float)
    flat = points.reshape(-1, 3)
    out = np.empty(len(flat))
    for start in range(0, len(flat), _CHUNK):
        chunk = flat[start:start + _CHUNK]
        out[start:start + _CHUNK] = _sample_indices(data, normalized_to_index(chunk, data.shape))
    return out.reshape(points.shape[:-1])


def center_planes(data):
    """Mid slices ``(V[H/2], V[:, W/2], V[:, :, D/2])`` with floor division."""
    H, W, D = data.shape
    return data[H // 2, :, :].copy(), data[:, W // 2, :].copy(), data[:, :, D // 2].copy()


def resample(volume, transform, dims=None):
    """Resample ``volume`` through ``transform`` onto a grid of ``dims``."""
    dims = tuple(volume.shape) if dims is None else tuple(dims)
    out = np.empty(dims)
    # slab by slab so peak memory stays bounded for 256^3 volumes
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in dims]
    theta = transform.theta if isinstance(transform, RigidTransform) else np.asarray(transform)
    gy, gz = np.meshgrid(axes[1], axes[2], indexing="ij")
    for i, x in enumerate(axes[0]):
        slab = np.stack([np.full_like(gy, x), gy, gz], axis=-1)
        out[i] = trilinear_sample(volume, transform_grid(slab, theta))
    return Volume(out, volume.spacing, volume.origin)


def standardize_volume(volume, transform):
    """Resample with ``transform`` and return ``(volume, (I_s, I_c, I_a))``."""
    out = resample(volume, transform)
    return out, center_planes(out.data)


def grid_jacobian(grid, quaternion, translation=None):
    """Derivative of ``R(q/|q|) g + t`` w.r.t. ``(q0..q3, tx, ty, tz)``.

    Returns an array of shape ``grid.shape[:-1] + (3, 7)``.
    """
    grid = np.asarray(grid, dtype=float)
    _, dR = rotation_and_derivatives(quaternion)
    J = np.empty(grid.shape[:-1] + (3, 7))
    J[..., :4] = np.einsum("kab,...b->...ak", dR, grid)
    J[..., 4:] = np.eye(3)
    return J
