"""Landmark vocabulary, landmark sets and the plane tables.

The 23-name vocabulary follows the facial landmark scheme (eyes, nose, mouth,
chin and ears).  The morphable model and the plane fitter only use the first
19 names; the four ear landmarks are kept in the vocabulary so annotation
files carrying them are still readable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError

VOCABULARY = (
    "exR", "exL", "enR", "enL", "n", "aR", "aL", "acR", "acL", "prn", "sn",
    "chR", "chL", "cphR", "cphL", "ls", "li", "sl", "pg",
    "tR", "tL", "oiR", "oiL",
)

#: Landmarks used by the shape model (ears excluded).
MODEL_LANDMARKS = VOCABULARY[:19]

PLANES = ("sagittal", "coronal", "axial")

#: Landmarks that define each plane.
PLANE_ASSIGNMENT = {
    "sagittal": ("n", "prn", "sn", "ls", "li", "sl", "pg"),
    "coronal": ("chR", "chL", "enR", "enL", "pg"),
    "axial": ("aR", "aL", "acR", "acL", "sn", "prn"),
}

#: Orientation rule per plane: landmarks expected on the positive / negative
#: side of the plane normal in the front-right canonical pose.
ORIENTATION_TABLE = {
    "sagittal": {
        "positive": ("enR", "exR", "aR", "ls", "acR", "chR"),
        "negative": ("enL", "exL", "aL", "acL", "chL"),
    },
    "coronal": {
        "positive": ("li", "cphR", "cphL", "prn", "sn", "acL", "acR"),
        "negative": ("exR", "exL"),
    },
    "axial": {
        "positive": ("enR", "exR", "n", "enL", "exL"),
        "negative": ("pg", "sl", "li", "chR", "chL", "ls", "cphL", "cphR"),
    },
}

_INDEX = {name: i for i, name in enumerate(VOCABULARY)}


@dataclass(frozen=True)
class LandmarkSet:
    """Named landmark positions (mm) with visibility flags.

    Always holds one entry per vocabulary name, in vocabulary order.
    Invisible entries have NaN positions.
    """

    positions: np.ndarray  # (23, 3)
    visible: np.ndarray  # (23,) bool

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(len(VOCABULARY), 3)
        vis = np.array(self.visible, dtype=bool).reshape(len(VOCABULARY))
        pos[~vis] = np.nan
        if not np.all(np.isfinite(pos[vis])):
            raise FormatError("visible landmarks must have finite coordinates")
        pos.setflags(write=False)
        vis.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "visible", vis)

    @classmethod
    def empty(cls):
        return cls(np.full((len(VOCABULARY), 3), np.nan), np.zeros(len(VOCABULARY), bool))

    @classmethod
    def from_dict(cls, points):
        """Build from ``{name: (x, y, z)}``; names not given are invisible."""
        pos = np.full((len(VOCABULARY), 3), np.nan)
        vis = np.zeros(len(VOCABULARY), bool)
        for name, p in points.items():
            pos[index_of(name)] = p
            vis[index_of(name)] = True
        return cls(pos, vis)

    def to_dict(self):
        return {n: self.positions[i].copy() for i, n in enumerate(VOCABULARY) if self.visible[i]}

    def is_visible(self, name):
        return bool(self.visible[index_of(name)])

    def position(self, name):
        return self.positions[index_of(name)].copy()

    @property
    def visible_names(self):
        return tuple(n for i, n in enumerate(VOCABULARY) if self.visible[i])

    def subset(self, names):
        """Positions of the visible landmarks among ``names`` -> (names, (k, 3))."""
        kept = [n for n in names if self.is_visible(n)]
        pts = np.array([self.position(n) for n in kept]).reshape(-1, 3)
        return tuple(kept), pts

    def with_positions(self, points):
        """Copy with ``{name: xyz}`` entries set visible at the given positions."""
        pos = self.positions.copy()
        vis = self.visible.copy()
        for name, p in points.items():
            pos[index_of(name)] = p
            vis[index_of(name)] = True
        return LandmarkSet(pos, vis)

    def hide(self, names):
        vis = self.visible.copy()
        for name in names:
            vis[index_of(name)] = False
        return LandmarkSet(self.positions.copy(), vis)

    def map_points(self, fn):
        """Apply ``fn`` ((k, 3) -> (k, 3)) to the visible positions."""
        pos = self.positions.copy()
        if self.visible.any():
            pos[self.visible] = fn(pos[self.visible])
        return LandmarkSet(pos, self.visible.copy())

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return bool(np.array_equal(self.visible, other.visible)
                    and np.array_equal(self.positions[self.visible], other.positions[other.visible]))

    __hash__ = None


def index_of(name):
    try:
        return _INDEX[name]
    except KeyError:
        raise FormatError(f"unknown landmark name {name!r}") from None
