"""Volume container and the normalized-coordinate convention.

A ``Volume`` holds a single-channel scalar grid indexed ``(h, w, d)``.
Physical coordinates are millimetres with axis ``k`` running along array
axis ``k``: ``p = origin + spacing * index``.

Normalized coordinates follow an endpoint-inclusive convention on every
axis: index ``0`` maps to ``-1`` and index ``n - 1`` maps to ``+1``
(a length-1 axis maps to ``0``).  Normalized component ``k`` always refers
to array axis ``k``; the grid sampler, translations and landmark conversion
all share this one convention.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise FormatError("volume metadata must be three-dimensional")
        if min(dims) <= 0:
            raise FormatError(f"dims must be positive, got {dims}")
        if not all(s > 0 and np.isfinite(s) for s in spacing):
            raise FormatError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)


@dataclass(frozen=True)
class Volume:
    """Scalar volume with metadata.  ``data`` has shape ``(H, W, D)``; C = 1."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    meta: VolumeMeta = field(init=False, repr=False, compare=False)

    channels = 1

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise FormatError(f"volume data must be 3-D, got shape {data.shape}")
        if data.size and not np.all(np.isfinite(data)):
            raise FormatError("volume samples must be finite")
        object.__setattr__(self, "data", data)
        meta = VolumeMeta(data.shape, self.spacing, self.origin)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "spacing", meta.spacing)
        object.__setattr__(self, "origin", meta.origin)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return Volume(data, self.spacing, self.origin)


def _scale(dims):
    n = np.asarray(dims, dtype=float)
    return np.where(n > 1, (n - 1) / 2.0, 0.0)


def normalized_to_index(u, dims):
    """Continuous voxel index for normalized coordinates ``u`` (..., 3)."""
    half = _scale(dims)
    return (np.asarray(u, dtype=float) + 1.0) * half * (half > 0)


def index_to_normalized(idx, dims):
    half = _scale(dims)
    idx = np.asarray(idx, dtype=float)
    safe = np.where(half > 0, half, 1.0)
    return np.where(half > 0, idx / safe - 1.0, 0.0)


def physical_to_normalized(points, meta):
    idx = (np.asarray(points, dtype=float) - np.asarray(meta.origin)) / np.asarray(meta.spacing)
    return index_to_normalized(idx, meta.dims)


def normalized_to_physical(u, meta):
    idx = normalized_to_index(u, meta.dims)
    return np.asarray(meta.origin) + idx * np.asarray(meta.spacing)


def normalized_scale(meta):
    """Normalized units per millimetre on each axis."""
    half = _scale(meta.dims) * np.asarray(meta.spacing)
    return np.where(half > 0, 1.0 / np.where(half > 0, half, 1.0), 0.0)
