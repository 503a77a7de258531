"""Readers and writers for landmarks, volumes, models, transforms and planes.

Formats
-------
Landmark CSV
    ``name,x,y,z,visible`` rows (header optional, ``#`` lines are comments).
    Coordinates are millimetres, stored as given; no RAS/LPS conversion.
Slicer markups JSON (``.mrk.json``)
    Only ``markups[*].controlPoints[*].label`` and ``.position`` are read.
MetaImage (``.mhd`` + ``.raw``)
    Little-endian samples; ``DimSize`` lists ``H W D`` and the raw payload
    is stored with ``h`` varying fastest, so file axis ``x`` is array axis 0.
Model container
    NumPy ``.npz`` archive with ``mean``, ``basis``, ``eigenvalues``,
    ``names`` and ``format_version``.
Transform JSON
    ``{"quaternion": [...], "translation_norm": [...], "matrix_3x4": [[...]]}``
    plus optional ``kind`` ("sampling" or "forward") and ``frame``.
Planes JSON
    normals (rows: sagittal, coronal, axial), center (mm), residual and
    per-plane landmark counts; optionally the volume metadata.
PGM
    Binary P5, 8-bit, min-max normalized.
"""

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import (FormatError, ModelFormatError, SizeMismatchError,
                     UnsupportedFormatError)
from .landmarks import VOCABULARY, LandmarkSet
from .plane_fit import PlaneTriple
from .shape_model import MorphableModel
from .transform import RigidTransform, quaternion_to_rotation
from .volume import Volume, VolumeMeta

FRAME_NOTE = "landmark frame as annotated (mm); RAS/LPS not converted"
MODEL_FORMAT_VERSION = 1
PLANES_FORMAT_VERSION = 1

# ----------------------------------------------------------------- landmarks


def _parse_visible(text, where):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise FormatError(f"{where}: visible flag must be 0/1, got {text!r}")


def read_landmarks_csv(path):
    points = {}
    try:
        with open(path, newline="") as fh:
            rows = [(n, r) for n, r in enumerate(csv.reader(fh), 1)
                    if r and not r[0].lstrip().startswith("#")]
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if rows and rows[0][1][0].strip().lower() == "name":
        rows = rows[1:]
    for lineno, row in rows:
        where = f"{path}:{lineno}"
        if len(row) != 5:
            raise FormatError(f"{where}: expected 5 fields (name,x,y,z,visible), got {len(row)}")
        name = row[0].strip()
        if name not in VOCABULARY:
            raise FormatError(f"{where}: unknown landmark name {name!r}")
        if name in points:
            raise FormatError(f"{where}: duplicate landmark {name!r}")
        if not _parse_visible(row[4], where):
            points[name] = None
            continue
        try:
            xyz = [float(v) for v in row[1:4]]
        except ValueError:
            raise FormatError(f"{where}: non-numeric coordinate in {row[1:4]}") from None
        if not np.all(np.isfinite(xyz)):
            raise FormatError(f"{where}: visible landmark {name!r} has non-finite coordinates")
        points[name] = xyz
    return LandmarkSet.from_dict({k: v for k, v in points.items() if v is not None})


def read_markups_json(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("markups"), list):
        raise FormatError(f"{path}: missing 'markups' list")
    points = {}
    for m, markup in enumerate(doc["markups"]):
        for k, cp in enumerate(markup.get("controlPoints") or []):
            where = f"{path}: markups[{m}].controlPoints[{k}]"
            if not isinstance(cp, dict) or "label" not in cp or "position" not in cp:
                raise FormatError(f"{where}: needs 'label' and 'position'")
            name = str(cp["label"]).strip()
            if name not in VOCABULARY:
                raise FormatError(f"{where}: unknown landmark name {name!r}")
            if name in points:
                raise FormatError(f"{where}: duplicate landmark {name!r}")
            try:
                xyz = np.array(cp["position"], dtype=float).reshape(3)
            except (TypeError, ValueError):
                raise FormatError(f"{where}: position must be three numbers") from None
            if not np.all(np.isfinite(xyz)):
                raise FormatError(f"{where}: non-finite position")
            points[name] = xyz
    return LandmarkSet.from_dict(points)


def read_landmarks(path):
    """Read a landmark CSV or Slicer markups JSON (chosen by extension)."""
    path = Path(path)
    if path.name.lower().endswith(".json"):
        return read_markups_json(path)
    if path.suffix.lower() == ".csv":
        return read_landmarks_csv(path)
    raise UnsupportedFormatError(f"{path}: landmark files must be .csv or .json")


def write_landmarks(landmarks, path):
    """Write all vocabulary entries as CSV; invisible rows carry ``nan``."""
    buf = io.StringIO()
    buf.write(f"# {FRAME_NOTE}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "x", "y", "z", "visible"])
    for i, name in enumerate(VOCABULARY):
        if landmarks.visible[i]:
            w.writerow([name] + [repr(float(v)) for v in landmarks.positions[i]] + [1])
        else:
            w.writerow([name, "nan", "nan", "nan", 0])
    Path(path).write_text(buf.getvalue())


def write_markups_json(landmarks, path):
    cps = [{"label": n, "position": [float(v) for v in landmarks.position(n)]}
           for n in landmarks.visible_names]
    doc = {"markups": [{"type": "Fiducial", "controlPoints": cps}]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# -------------------------------------------------------------------- volume

_MET_TYPES = {
    "MET_UCHAR": "<u1", "MET_CHAR": "<i1", "MET_USHORT": "<u2", "MET_SHORT": "<i2",
    "MET_UINT": "<u4", "MET_INT": "<i4", "MET_ULONG_LONG": "<u8", "MET_LONG_LONG": "<i8",
    "MET_FLOAT": "<f4", "MET_DOUBLE": "<f8",
}
_DTYPE_TO_MET = {np.dtype(v).newbyteorder("="): k for k, v in _MET_TYPES.items()}


def _read_header(path):
    header = {}
    try:
        with open(path, "r", errors="replace") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                if "=" not in line:
                    raise FormatError(f"{path}:{lineno}: expected 'Key = Value'")
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
                if key.strip() == "ElementDataFile":
                    break
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return header


def _floats(header, key, default, path):
    if key not in header:
        return default
    try:
        vals = tuple(float(v) for v in header[key].split())
    except ValueError:
        raise FormatError(f"{path}: bad {key} {header[key]!r}") from None
    if len(vals) != 3:
        raise FormatError(f"{path}: {key} must have three values")
    return vals


def read_volume(path):
    """Read a MetaImage ``.mhd`` header and its raw payload."""
    path = Path(path)
    h = _read_header(path)
    for key in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if key not in h:
            raise FormatError(f"{path}: missing header key {key}")
    if h["NDims"] != "3":
        raise UnsupportedFormatError(f"{path}: only 3-D images are supported (NDims={h['NDims']})")
    if h.get("ElementNumberOfChannels", "1") != "1":
        raise UnsupportedFormatError(f"{path}: multi-channel images are not supported")
    if h.get("CompressedData", "False").lower() == "true":
        raise UnsupportedFormatError(f"{path}: compressed data is not supported")
    if h.get("BinaryDataByteOrderMSB", h.get("ElementByteOrderMSB", "False")).lower() == "true":
        raise UnsupportedFormatError(f"{path}: big-endian data is not supported")
    etype = h["ElementType"]
    if etype not in _MET_TYPES:
        raise UnsupportedFormatError(f"{path}: unsupported element type {etype}")
    try:
        dims = tuple(int(v) for v in h["DimSize"].split())
    except ValueError:
        raise FormatError(f"{path}: bad DimSize {h['DimSize']!r}") from None
    if len(dims) != 3 or min(dims) <= 0:
        raise FormatError(f"{path}: DimSize must be three positive integers")
    spacing = _floats(h, "ElementSpacing", _floats(h, "ElementSize", (1.0, 1.0, 1.0), path), path)
    origin = _floats(h, "Offset", _floats(h, "Origin", (0.0, 0.0, 0.0), path), path)
    meta = VolumeMeta(dims, spacing, origin)

    raw_name = h["ElementDataFile"]
    if raw_name.upper() == "LOCAL" or raw_name.upper().startswith("LIST"):
        raise UnsupportedFormatError(f"{path}: ElementDataFile {raw_name} is not supported")
    raw_path = path.parent / raw_name
    dtype = np.dtype(_MET_TYPES[etype])
    try:
        payload = raw_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read raw file {raw_path}: {exc}") from None
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise SizeMismatchError(
            f"{raw_path}: {len(payload)} bytes, header implies {expected} "
            f"({int(np.prod(dims))} samples of {etype})")
    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    data = data.astype(dtype.newbyteorder("="))
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{raw_path}: non-finite samples")
    return Volume(data, meta.spacing, meta.origin)


def write_volume(volume, path):
    """Write ``path`` (.mhd) and a sibling ``.raw`` file."""
    path = Path(path)
    data = np.asarray(volume.data)
    etype = _DTYPE_TO_MET.get(data.dtype.newbyteorder("="))
    if etype is None:
        raise UnsupportedFormatError(f"cannot store dtype {data.dtype} in MetaImage")
    raw_path = path.with_suffix(".raw")
    fmt = lambda vals: " ".join(repr(float(v)) for v in vals)  # noqa: E731
    header = "\n".join([
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        "TransformMatrix = 1 0 0 0 1 0 0 0 1",
        f"Offset = {fmt(volume.origin)}",
        f"ElementSpacing = {fmt(volume.spacing)}",
        f"DimSize = {' '.join(str(d) for d in data.shape)}",
        f"ElementType = {etype}",
        f"ElementDataFile = {raw_path.name}",
    ]) + "\n"
    raw_path.write_bytes(np.asarray(data, dtype=np.dtype(_MET_TYPES[etype])).tobytes(order="F"))
    path.write_text(header)


# --------------------------------------------------------------------- model


def write_model(model, path):
    """Store a validated model as an ``.npz`` container (exact float64)."""
    model.check()
    with open(path, "wb") as fh:
        np.savez(fh, mean=model.mean, basis=model.basis, eigenvalues=model.eigenvalues,
                 names=np.array(model.names), format_version=np.array(MODEL_FORMAT_VERSION))


def read_model(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a model container ({exc})") from None
    missing = {"mean", "basis", "eigenvalues", "names"} - set(arrays)
    if missing:
        raise ModelFormatError(f"{path}: missing arrays {sorted(missing)}")
    if int(arrays.get("format_version", MODEL_FORMAT_VERSION)) != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model format version")
    try:
        model = MorphableModel(arrays["mean"], arrays["basis"], arrays["eigenvalues"],
                               tuple(str(n) for n in arrays["names"]))
    except FormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return model.check()


# ----------------------------------------------------------------- transform


def transform_to_dict(transform, kind="sampling"):
    return {
        "quaternion": [float(v) for v in transform.quaternion],
        "translation_norm": [float(v) for v in transform.translation],
        "matrix_3x4": [[float(v) for v in row] for row in transform.theta],
        "kind": kind,
    }


def write_transform(transform, path, kind="sampling"):
    _write_json(path, transform_to_dict(transform, kind))


def transform_from_dict(doc, where="transform"):
    try:
        q = np.array(doc["quaternion"], dtype=float).reshape(4)
        t = np.array(doc["translation_norm"], dtype=float).reshape(3)
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{where}: needs 'quaternion' (4) and 'translation_norm' (3)") from None
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise FormatError(f"{where}: quaternion is not unit norm")
    if "matrix_3x4" in doc:
        try:
            m = np.array(doc["matrix_3x4"], dtype=float).reshape(3, 4)
        except (TypeError, ValueError):
            raise FormatError(f"{where}: matrix_3x4 must be 3x4") from None
        if np.abs(m[:, :3] - quaternion_to_rotation(q)).max() > 1e-9:
            raise FormatError(f"{where}: matrix rotation block disagrees with the quaternion")
        if np.abs(m[:, 3] - t).max() > 1e-9:
            raise FormatError(f"{where}: matrix translation disagrees with translation_norm")
    return RigidTransform(q, t), doc.get("kind", "sampling")


def read_transform(path):
    """Return ``(RigidTransform, kind)``."""
    return transform_from_dict(_read_json(path), str(path))


# -------------------------------------------------------------------- planes


def planes_to_dict(triple, meta=None):
    doc = {
        "format_version": PLANES_FORMAT_VERSION,
        "normals": {p: [float(v) for v in n]
                    for p, n in zip(("sagittal", "coronal", "axial"), triple.normals)},
        "center_mm": [float(v) for v in triple.center],
        "residual": float(triple.residual),
        "landmark_counts": dict(zip(("sagittal", "coronal", "axial"), triple.counts)),
        "frame": FRAME_NOTE,
    }
    if meta is not None:
        doc["volume"] = {"dims": list(meta.dims), "spacing": list(meta.spacing),
                         "origin": list(meta.origin)}
    return doc


def write_planes(triple, path, meta=None):
    _write_json(path, planes_to_dict(triple, meta))


def read_planes(path):
    """Return ``(PlaneTriple, VolumeMeta or None)``."""
    doc = _read_json(path)
    try:
        normals = np.array([doc["normals"][p] for p in ("sagittal", "coronal", "axial")],
                           dtype=float)
        center = np.array(doc["center_mm"], dtype=float).reshape(3)
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: needs 'normals' (sagittal/coronal/axial) and 'center_mm'")
    if normals.shape != (3, 3) or np.abs(normals @ normals.T - np.eye(3)).max() > 1e-6:
        raise FormatError(f"{path}: normals must be three orthonormal 3-vectors")
    counts = doc.get("landmark_counts") or {}
    triple = PlaneTriple(normals, center, doc.get("residual", 0.0),
                         tuple(counts.get(p, 0) for p in ("sagittal", "coronal", "axial")))
    meta = None
    if "volume" in doc:
        v = doc["volume"]
        meta = VolumeMeta(v["dims"], v["spacing"], v["origin"])
    return triple, meta


# ----------------------------------------------------------------- images


def write_plane_image(image, path):
    """8-bit binary PGM after min-max scaling; a constant image becomes 128."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"plane image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("plane image values must be finite")
    lo, hi = img.min(), img.max()
    if hi > lo:
        pix = np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pix = np.full(img.shape, 128, np.uint8)
    rows, cols = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only 8-bit PGM is supported")
    pix = blob[len(blob) - rows * cols:]
    return np.frombuffer(pix, np.uint8).reshape(rows, cols)


# --------------------------------------------------------------------- json


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
