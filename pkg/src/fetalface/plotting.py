"""Figures written next to the CLI's tabular reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PLANE_NAMES = ("sagittal", "coronal", "axial")

# fixed metadata keeps PNG output byte-identical between runs
_PNG_META = {"Software": None}


def plot_planes(planes, path, titles=PLANE_NAMES, suptitle=None):
    """Save the three extracted planes side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    for ax, img, title in zip(axes, planes, titles):
        ax.imshow(np.asarray(img).T, cmap="gray", origin="lower")
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_error_boxplots(rows, path, groups=None):
    """Boxplots of rotation (deg) and translation (mm) errors per plane.

    ``rows`` is a list of per-case dicts as produced by the batch evaluator.
    ``groups`` optionally maps a label to such a list for side-by-side boxes.
    """
    groups = groups or {"pred": rows}
    fig, (ax_r, ax_t) = plt.subplots(1, 2, figsize=(10, 4))
    labels = list(groups)
    width = 0.8 / len(labels)
    for g, label in enumerate(labels):
        data = groups[label]
        rot = [[r[f"angle_{p}_deg"] for r in data] for p in PLANE_NAMES]
        rot.append([r["geodesic_deg"] for r in data])
        trans = [[r[f"offset_{p}_mm"] for r in data] for p in PLANE_NAMES]
        trans.append([r["translation_mm"] for r in data])
        pos = np.arange(4) + (g - (len(labels) - 1) / 2) * width
        ax_r.boxplot(rot, positions=pos, widths=width * 0.9, manage_ticks=False)
        ax_t.boxplot(trans, positions=pos, widths=width * 0.9, manage_ticks=False)
    ticks = list(PLANE_NAMES) + ["global"]
    for ax, ylabel in ((ax_r, "rotation error (deg)"), (ax_t, "translation error (mm)")):
        ax.set_xticks(np.arange(4))
        ax.set_xticklabels(ticks)
        ax.set_ylabel(ylabel)
        ax.grid(axis="y", alpha=0.3)
    if len(labels) > 1:
        ax_r.set_title(" | ".join(labels))
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
