"""Face segmentation and network-ready volume layout."""

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, EmptySegmentationError, SizeError
from .resample import center_planes
from .volume import Volume

TARGET_SIZE = 256
N_BINS = 256


def _histogram(samples, n_bins=N_BINS):
    samples = np.asarray(samples, dtype=float).ravel()
    lo, hi = samples.min(), samples.max()
    if not hi > lo:
        raise DegenerateInputError("Otsu threshold needs at least two distinct sample values")
    # bin index of every sample; the maximum falls in the last bin
    idx = np.minimum(((samples - lo) / (hi - lo) * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return counts, lo, hi


def otsu_bin(samples, n_bins=N_BINS):
    """Bin index ``k`` maximizing between-class variance of {0..k} vs {k+1..}.

    Bins are equal-width over ``[min, max]``; class means use bin indices,
    which leaves the arg max unchanged.  Ties go to the lowest ``k``.
    """
    counts, _, _ = _histogram(samples, n_bins)
    return _otsu_from_counts(counts)


def _otsu_from_counts(counts):
    counts = np.asarray(counts, dtype=float)
    k = np.arange(len(counts), dtype=float)
    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * k)[:-1]
    total_w, total_s = counts.sum(), (counts * k).sum()
    w1 = total_w - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.full(len(w0), -1.0)
    mu0 = s0[valid] / w0[valid]
    mu1 = (total_s - s0[valid]) / w1[valid]
    between[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2
    return int(np.argmax(between))


def otsu_threshold(volume, n_bins=N_BINS):
    """Otsu threshold value: the upper edge of the selected bin.

    Samples strictly above the returned value form the foreground.
    """
    samples = volume.data if isinstance(volume, Volume) else volume
    counts, lo, hi = _histogram(samples, n_bins)
    k = _otsu_from_counts(counts)
    return lo + (k + 1) * (hi - lo) / n_bins


def largest_component(mask):
    """Keep the largest 6-connected component.

    Equal sizes go to the component whose first voxel comes first in
    ``(h, w, d)`` scan order.
    """
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(3, 1)
    labels, n = ndimage.label(mask, structure=structure)
    if n == 0:
        raise EmptySegmentationError("mask has no foreground voxel")
    sizes = np.bincount(labels.ravel())[1:]
    # labels are numbered in scan order of their first voxel, argmax keeps the first
    return labels == (int(np.argmax(sizes)) + 1)


def segment_face(volume):
    """Otsu foreground restricted to its largest component."""
    return largest_component(volume.data > otsu_threshold(volume))


def downsample2(data):
    """2x2x2 mean pooling; an odd trailing voxel on any axis is dropped."""
    data = np.asarray(data, dtype=float)
    H, W, D = (s // 2 for s in data.shape)
    trimmed = data[:2 * H, :2 * W, :2 * D]
    return trimmed.reshape(H, 2, W, 2, D, 2).mean(axis=(1, 3, 5))


def pad_widths(shape, target=TARGET_SIZE):
    """Symmetric padding per axis; an odd surplus goes to the high side."""
    return [((target - s) // 2, target - s - (target - s) // 2) for s in shape]


def standardize_layout(volume, target=TARGET_SIZE):
    """Downsample by two and zero-pad symmetrically to ``target`` per axis.

    Spacing doubles and the origin moves so every retained (pooled) voxel
    keeps its physical position.
    """
    pooled = downsample2(volume.data)
    if max(pooled.shape) > target:
        raise SizeError(f"downsampled dims {pooled.shape} exceed {target}")
    if min(pooled.shape) == 0:
        raise SizeError(f"volume {volume.shape} is too small to downsample")
    pads = pad_widths(pooled.shape, target)
    out = np.pad(pooled, pads)
    spacing = np.asarray(volume.spacing) * 2
    origin = (np.asarray(volume.origin) + 0.5 * np.asarray(volume.spacing)
              - spacing * np.array([p[0] for p in pads]))
    return Volume(out, tuple(spacing), tuple(origin))


def extract_center_planes(volume):
    data = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    return center_planes(data)
