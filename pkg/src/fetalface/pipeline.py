"""End-to-end ground-truth construction and iterative standardization."""

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io_formats
from .errors import FetalFaceError, FormatError
from .plane_fit import (FitConfig, PlaneTriple, assign_landmarks, fit_orthogonal_planes,
                        homogenize_normals)
from .preprocess import standardize_layout
from .resample import standardize_volume
from .shape_model import complete_landmarks
from .transform import (RigidTransform, cumulative_update, gt_transform,
                        standardizing_transform)

logger = logging.getLogger(__name__)

SEED_ENV = "FETALFACE_SEED"
CONFIG_VERSION = 1


def default_seed():
    return int(os.environ.get(SEED_ENV, "0"))


@dataclass
class PipelineConfig:
    landmarks: str = None
    model: str = None
    volume: str = None
    out: str = "out"
    wp: float = 1.0
    completion_rounds: int = 2
    similarity: bool = True
    complete: bool = True
    restarts: int = 8
    seed: int = field(default_factory=default_seed)
    eps: float = 1e-6
    max_iter: int = 500
    iterations: int = 3
    strict: bool = True
    preprocess: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def fit_config(self):
        return FitConfig(restarts=self.restarts, seed=self.seed, eps=self.eps,
                         max_iter=self.max_iter)

    def to_dict(self):
        d = asdict(self)
        d["config_version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


@dataclass
class GTResult:
    landmarks: object
    triple: PlaneTriple
    theta_gt: RigidTransform = None
    transform: RigidTransform = None
    volume: object = None
    planes: tuple = None
    warnings: list = field(default_factory=list)


def compute_gt(landmarks, model=None, config=None, meta=None):
    """Completion, plane fit, homogenization and transform assembly."""
    config = config or PipelineConfig()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        filled = landmarks
        if config.complete and model is not None:
            filled = complete_landmarks(model, landmarks, wp=config.wp,
                                        rounds=config.completion_rounds,
                                        scale=config.similarity)
        points, flagged = assign_landmarks(filled, strict=config.strict)
        triple = fit_orthogonal_planes(points, config.fit_config())
        triple = homogenize_normals(triple, filled)
        theta = transform = None
        if meta is not None:
            theta = gt_transform(triple, meta)
            transform = standardizing_transform(triple, meta)
    notes = [str(w.message) for w in caught]
    for note in notes:
        logger.warning(note)
    return GTResult(filled, triple, theta, transform, warnings=notes)


def run_gt_pipeline(config):
    """Run one case from files and write all artifacts into ``config.out``."""
    out = io_formats.ensure_dir(config.out)
    landmarks = io_formats.read_landmarks(config.landmarks)
    model = io_formats.read_model(config.model) if (config.model and config.complete) else None
    volume = None
    meta = None
    if config.volume:
        volume = io_formats.read_volume(config.volume)
        if config.preprocess:
            volume = standardize_layout(volume)
        meta = volume.meta

    result = compute_gt(landmarks, model, config, meta)
    _write_json(out / "config.json", config.to_dict())
    io_formats.write_landmarks(result.landmarks, out / "landmarks_filled.csv")
    io_formats.write_planes(result.triple, out / "planes.json", meta)
    if meta is not None:
        io_formats.write_transform(result.theta_gt, out / "theta_gt.json", kind="forward")
        io_formats.write_transform(result.transform, out / "transform.json", kind="sampling")
        std, planes = standardize_volume(volume, result.transform)
        result.volume, result.planes = std, planes
        io_formats.write_volume(std.with_data(std.data.astype(np.float32)), out / "standardized.mhd")
        for name, img in zip(("sagittal", "coronal", "axial"), planes):
            io_formats.write_plane_image(img, out / f"plane_{name}.pgm")
    _write_json(out / "warnings.json", result.warnings)
    return result


EXIT_OK = 0
EXIT_PARTIAL = 10
EXIT_ALL_FAILED = 11


def _run_case(case, cfg):
    try:
        return case, run_gt_pipeline(cfg), None
    except FetalFaceError as exc:
        return case, None, {"case": case, "error": type(exc).__name__,
                            "message": f"case {case}: {exc}", "exit_code": exc.exit_code}


def run_batch(manifest, config, workers=1):
    """Run every case of a manifest CSV (``case,landmarks[,volume]``).

    Each case writes into ``<out>/<case>/``.  With ``workers > 1`` cases run
    in separate processes.  Failures do not stop the batch; they are merged
    in manifest order into ``<out>/failures.json``.  Returns
    ``(exit_code, results, failures)``.
    """
    base = Path(manifest).parent
    try:
        with open(manifest, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
    except OSError as exc:
        raise FormatError(f"{manifest}: {exc}") from None
    if not rows or "case" not in rows[0] or "landmarks" not in rows[0]:
        raise FormatError(f"{manifest}: needs 'case' and 'landmarks' columns")
    cases = [r["case"] for r in rows]
    if len(set(cases)) != len(cases):
        raise FormatError(f"{manifest}: duplicate case identifiers")
    out = io_formats.ensure_dir(config.out)
    jobs = []
    for row in rows:
        case = row["case"]
        cfg = PipelineConfig.from_dict({**asdict(config),
                                        "landmarks": str(base / row["landmarks"]),
                                        "volume": str(base / row["volume"]) if row.get("volume") else None,
                                        "out": str(out / case)})
        jobs.append((case, cfg))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_case, *zip(*jobs)))
    else:
        done = [_run_case(case, cfg) for case, cfg in jobs]
    results, failures = {}, []
    for case, result, failure in done:
        if failure is None:
            results[case] = result
        else:
            logger.error(failure["message"])
            failures.append(failure)
    _write_json(out / "failures.json", failures)
    if not failures:
        code = EXIT_OK
    elif results:
        code = EXIT_PARTIAL
    else:
        code = EXIT_ALL_FAILED
    return code, results, failures


def run_iterative_standardization(volume, steps, iterations=3, relative_gt=None,
                                  initial=None):
    """Accumulate step transforms and resample the volume once.

    ``steps`` is a sequence of ``RigidTransform`` (one per iteration) or a
    callable ``(accumulated, relative_gt) -> step`` standing in for the
    regression network.  Returns ``(volume, planes, accumulated, relative_gt)``.
    """
    accumulated = initial or RigidTransform.identity()
    for it in range(iterations):
        step = steps(accumulated, relative_gt) if callable(steps) else steps[it]
        if relative_gt is None:
            accumulated = cumulative_update(accumulated, step, RigidTransform.identity())[0]
        else:
            accumulated, relative_gt = cumulative_update(accumulated, step, relative_gt)
    std, planes = standardize_volume(volume, accumulated)
    return std, planes, accumulated, relative_gt


def gt_oracle(accumulated, relative_gt):
    """Step source returning the remaining ground-truth transform exactly."""
    return relative_gt


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
