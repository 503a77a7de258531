"""Independent reference implementations used only by the tests."""

import numpy as np


def otsu_brute_force(counts):
    """Exhaustive search over all split points with bin-center values.

    Classes are bins ``[0, k]`` and ``[k+1, n)``; the split with the largest
    between-class variance wins, the lowest ``k`` on ties.
    """
    counts = [float(c) for c in counts]
    n = len(counts)
    total = sum(counts)
    best_k, best = 0, -1.0
    for k in range(n - 1):
        w0 = sum(counts[:k + 1])
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0 = sum((i + 0.5) * counts[i] for i in range(k + 1)) / w0
        m1 = sum((i + 0.5) * counts[i] for i in range(k + 1, n)) / w1
        var = (w0 / total) * (w1 / total) * (m0 - m1) ** 2
        if var > best * (1 + 1e-12):
            best_k, best = k, var
    return best_k


def quaternion_angle_deg(q1, q2):
    """Rotation angle between unit quaternions: ``2 acos |q1 . q2|``."""
    dot = np.abs(np.sum(q1 * q2, axis=-1))
    return np.degrees(2.0 * np.arccos(np.clip(dot, -1.0, 1.0)))


def central_difference(fn, x, h):
    x = np.asarray(x, dtype=float)
    out = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(out, axis=-1)


def umeyama(src, dst):
    """Similarity ``dst ~ s R src + t`` from the SVD of the cross-covariance."""
    mu_s, mu_d = src.mean(0), dst.mean(0)
    a, b = src - mu_s, dst - mu_d
    u, sig, vt = np.linalg.svd(b.T @ a / len(src))
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1
    R = u @ np.diag(d) @ vt
    s = (sig * d).sum() / (a ** 2).sum(1).mean()
    return s, R, mu_d - s * R @ mu_s


def trilinear_oracle(data, points_norm):
    """scipy map_coordinates at normalized points, zero outside the grid."""
    from scipy.ndimage import map_coordinates
    shape = np.array(data.shape, dtype=float)
    idx = (np.asarray(points_norm, dtype=float).reshape(-1, 3) + 1.0) * (shape - 1) / 2.0
    return map_coordinates(np.asarray(data, dtype=float), idx.T, order=1, mode="grid-constant", cval=0.0)


def rotation_scipy(q):
    """Rotation of a (not necessarily unit) scalar-first quaternion via scipy."""
    from scipy.spatial.transform import Rotation
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def grid_loss_gradient_check(loss_fn, diff_fn, p, h=1e-5, min_h=1e-9):
    """Central differences per coordinate with a step that crosses no kink.

    ``diff_fn(p)`` returns the residuals whose absolute values are averaged;
    the step is halved until no residual changes sign within ``[p-h, p+h]``.
    """
    p = np.asarray(p, dtype=float)
    base = np.sign(diff_fn(p))
    grad = np.empty(p.size)
    for k in range(p.size):
        step = h
        while True:
            e = np.zeros_like(p)
            e[k] = step
            if (np.array_equal(np.sign(diff_fn(p + e)), base)
                    and np.array_equal(np.sign(diff_fn(p - e)), base)) or step < min_h:
                break
            step /= 2
        grad[k] = (loss_fn(p + e) - loss_fn(p - e)) / (2 * step)
    return grad
