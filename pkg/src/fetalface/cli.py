"""Command-line front end.

Every command maps a ``FetalFaceError`` escaping it to that class's exit
code; see the README for the table.  The default seed comes from the
``FETALFACE_SEED`` environment variable and is echoed into every config
file, so a saved config alone reproduces a run.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io_formats, synth
from .errors import FetalFaceError, FormatError
from .landmarks import MODEL_LANDMARKS
from .metrics import evaluate_planes, paired_t_test
from .pipeline import PipelineConfig, default_seed, run_batch, run_gt_pipeline, run_iterative_standardization
from .plane_fit import FitConfig, assign_landmarks, fit_orthogonal_planes, homogenize_normals
from .plotting import PLANE_NAMES, plot_error_boxplots, plot_planes
from .preprocess import segment_face, standardize_layout
from .resample import standardize_volume
from .shape_model import build_toy_model, complete_landmarks
from .transform import gt_transform, invert, standardizing_transform

logger = logging.getLogger("fetalface")


def _print_transform(transform, label):
    print(f"{label} quaternion (w, x, y, z): " + " ".join(f"{v:.9f}" for v in transform.quaternion))
    print(f"{label} 3x4:")
    for row in transform.theta:
        print("  " + " ".join(f"{v: .9f}" for v in row))


# ------------------------------------------------------------------ commands


def cmd_complete_landmarks(args):
    model = io_formats.read_model(args.model)
    lms = io_formats.read_landmarks(args.input)
    filled = complete_landmarks(model, lms, wp=args.wp, rounds=args.rounds, scale=not args.rigid)
    io_formats.write_landmarks(filled, args.out)
    print(f"completed {len(filled.visible_names) - len(lms.visible_names)} landmark(s) -> {args.out}")
    return 0


def cmd_fit_planes(args):
    lms = io_formats.read_landmarks(args.input)
    config = FitConfig(restarts=args.restarts, seed=args.seed, eps=args.eps, max_iter=args.max_iter)
    points, flagged = assign_landmarks(lms, strict=not args.lenient)
    for plane in flagged:
        logger.warning("plane %s is under-determined", plane)
    triple = homogenize_normals(fit_orthogonal_planes(points, config), lms)
    meta = io_formats.read_volume(args.volume).meta if args.volume else None
    io_formats.write_planes(triple, args.out, meta)
    print(f"residual {triple.residual:.6g}; planes -> {args.out}")
    if meta is not None:
        _print_transform(gt_transform(triple, meta), "theta_gt")
        transform = standardizing_transform(triple, meta)
        _print_transform(transform, "sampling")
        if args.transform_out:
            io_formats.write_transform(transform, args.transform_out, kind="sampling")
    return 0


def _load_sampling(path):
    transform, kind = io_formats.read_transform(path)
    return invert(transform) if kind == "forward" else transform


def cmd_standardize_volume(args):
    volume = io_formats.read_volume(args.input)
    if args.layout:
        volume = standardize_layout(volume)
    if args.preprocess_only:
        mask = segment_face(volume)
        out = volume.with_data(np.where(mask, volume.data, 0.0).astype(np.float32))
        io_formats.write_volume(standardize_layout(out) if not args.layout else out, args.out)
        print(f"segmented {int(mask.sum())} voxels -> {args.out}")
        return 0
    if args.steps:
        for path in args.steps:
            if not Path(path).is_file():
                raise FormatError(f"{path}: step transform file not found")
        steps = [_load_sampling(p) for p in args.steps]
        iterations = args.iterations or len(steps)
        if iterations > len(steps):
            raise FormatError(f"{iterations} iterations need as many step files, got {len(steps)}")
        std, planes, acc, _ = run_iterative_standardization(volume, steps, iterations)
        _print_transform(acc, "accumulated")
    elif args.transform:
        std, planes = standardize_volume(volume, _load_sampling(args.transform))
    else:
        raise FormatError("standardize-volume needs --transform or --steps")
    io_formats.write_volume(std.with_data(std.data.astype(np.float32)), args.out)
    if args.planes_out:
        out = io_formats.ensure_dir(args.planes_out)
        for name, img in zip(PLANE_NAMES, planes):
            io_formats.write_plane_image(img, out / f"plane_{name}.pgm")
    if args.figure:
        plot_planes(planes, args.figure)
    print(f"standardized volume -> {args.out}")
    return 0


def _report_row(case, report):
    row = {"case": case, "geodesic_deg": report.geodesic_deg,
           "translation_mm": report.translation_mm}
    for name, a, o in zip(PLANE_NAMES, report.plane_angle_deg, report.plane_offset_mm):
        row[f"angle_{name}_deg"] = a
        row[f"offset_{name}_mm"] = o
    row["mean_plane_angle_deg"] = report.mean_plane_angle_deg
    row["mean_plane_offset_mm"] = report.mean_plane_offset_mm
    return row


def _evaluate_pair(pred_path, ref_path, signed):
    pred, _ = io_formats.read_planes(pred_path)
    ref, meta = io_formats.read_planes(ref_path)
    return evaluate_planes(pred, ref, signed=signed, meta=meta)


def _write_rows(rows, path):
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for r in rows:
            writer.writerow([r[k] if isinstance(r[k], str) else f"{r[k]:.6f}" for k in keys])


def _summary(rows):
    keys = [k for k in rows[0] if k != "case"]
    return {k: {"mean": float(np.mean([r[k] for r in rows])),
                "sd": float(np.std([r[k] for r in rows], ddof=1)) if len(rows) > 1 else 0.0}
            for k in keys}


def cmd_evaluate(args):
    if not args.batch:
        if not (args.pred and args.ref):
            raise FormatError("evaluate needs --pred and --ref (or --batch)")
        report = _evaluate_pair(args.pred, args.ref, args.signed)
        doc = report.to_dict()
        if args.report:
            Path(args.report).write_text(json.dumps(doc, indent=2) + "\n")
        print(json.dumps(doc, indent=2))
        return 0

    base = Path(args.batch).parent
    with open(args.batch, newline="") as fh:
        entries = list(csv.DictReader(fh))
    if not entries or not {"case", "pred", "ref"} <= set(entries[0]):
        raise FormatError(f"{args.batch}: needs 'case', 'pred' and 'ref' columns")
    out = io_formats.ensure_dir(args.out_dir)
    rows, rows_b = [], []
    for e in entries:
        rows.append(_report_row(e["case"], _evaluate_pair(base / e["pred"], base / e["ref"], args.signed)))
        if e.get("pred_b"):
            rows_b.append(_report_row(e["case"], _evaluate_pair(base / e["pred_b"], base / e["ref"],
                                                                 args.signed)))
    _write_rows(rows, out / "per_case.csv")
    summary = {"n": len(rows), "pred": _summary(rows)}
    groups = {"pred": rows}
    if rows_b:
        if len(rows_b) != len(rows):
            raise FormatError(f"{args.batch}: 'pred_b' must be given for every case or none")
        _write_rows(rows_b, out / "per_case_b.csv")
        summary["pred_b"] = _summary(rows_b)
        tests = {}
        for key in ("geodesic_deg", "translation_mm", "mean_plane_angle_deg", "mean_plane_offset_mm"):
            a = [r[key] for r in rows]
            b = [r[key] for r in rows_b]
            t, p, sig = paired_t_test(a, b, alpha=args.alpha)
            tests[key] = {"t": t, "p": p, "significant": bool(sig)}
        summary["paired_t_test"] = {"alpha": args.alpha, "tests": tests}
        groups["pred_b"] = rows_b
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    plot_error_boxplots(rows, out / "errors_boxplot.png", groups)
    for key, stats in summary["pred"].items():
        print(f"{key:24s} {stats['mean']:10.4f} +- {stats['sd']:.4f}")
    return 0


def cmd_synth(args):
    out = io_formats.ensure_dir(args.out)
    rng = np.random.default_rng(args.seed)
    if args.kind == "landmarks":
        lms, triple = synth.make_canonical_phantom()
        io_formats.write_landmarks(lms, out / "canonical.csv")
        io_formats.write_planes(triple, out / "canonical_planes.json")
        pose = synth.random_pose(rng, args.max_angle, args.max_translation_mm)
        spec = synth.PhantomSpec(seed=args.seed, noise_sigma=args.noise, hidden=args.hidden,
                                 pose=pose)
        posed = synth.corrupt_until_valid(lms, spec)
        io_formats.write_landmarks(posed, out / "landmarks.csv")
        truth = triple.transformed(pose.rotation, pose.translation)
        io_formats.write_planes(truth, out / "planes_true.json")
    elif args.kind == "volume":
        pose = synth.random_pose(rng, args.max_angle, 0.05)
        volume, transform = synth.make_voxel_phantom(tuple(args.dims), pose)
        io_formats.write_volume(volume.with_data(volume.data.astype(np.float32)), out / "volume.mhd")
        io_formats.write_transform(transform, out / "transform_true.json", kind="sampling")
        lms = synth.posed_landmarks(pose, volume.meta)
        io_formats.write_landmarks(lms, out / "landmarks.csv")
    else:
        training = synth.make_training_shapes(args.count, modes=args.modes, seed=args.seed)
        model = build_toy_model(training.shapes, names=MODEL_LANDMARKS)
        io_formats.write_model(model, out / "model.npz")
        np.savetxt(out / "realized_spectrum.txt", training.realized_spectrum, fmt="%.9f")
    print(f"synthetic {args.kind} -> {out}")
    return 0


def _config_from_args(args):
    doc = {}
    if args.config:
        doc = io_formats._read_json(args.config)
    for key in ("landmarks", "model", "volume", "out", "wp", "completion_rounds", "restarts",
                "seed", "eps", "max_iter", "iterations"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.rigid:
        doc["similarity"] = False
    if args.no_complete:
        doc["complete"] = False
    if args.lenient:
        doc["strict"] = False
    if args.preprocess:
        doc["preprocess"] = True
    doc.setdefault("seed", default_seed())
    return PipelineConfig.from_dict(doc)


def cmd_pipeline(args):
    config = _config_from_args(args)
    if args.batch:
        code, results, failures = run_batch(args.batch, config, workers=args.workers)
        print(f"{len(results)} case(s) ok, {len(failures)} failed")
        return code
    if not config.landmarks:
        raise FormatError("pipeline needs --landmarks (or --batch)")
    case = Path(config.landmarks).stem
    try:
        result = run_gt_pipeline(config)
    except FetalFaceError as exc:
        print(f"error: case {case}: {exc}", file=sys.stderr)
        return exc.exit_code
    if result.transform is not None:
        _print_transform(result.transform, "sampling")
        if args.figure:
            plot_planes(result.planes, Path(config.out) / "planes.png")
    print(f"case {case} -> {config.out}")
    return 0


# -------------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="fetalface", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete-landmarks", help="fill hidden landmarks with a shape model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--wp", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--rigid", action="store_true", help="rigid instead of similarity alignment")
    p.set_defaults(func=cmd_complete_landmarks)

    p = sub.add_parser("fit-planes", help="fit the orthogonal plane triple to landmarks")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--lenient", action="store_true", help="warn on under-determined planes")
    p.add_argument("--volume", help="volume whose metadata defines the transform")
    p.add_argument("--transform-out", help="write the sampling transform (needs --volume)")
    p.set_defaults(func=cmd_fit_planes)

    p = sub.add_parser("standardize-volume", help="resample a volume into the standard pose")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--transform", help="transform JSON (sampling or forward kind)")
    p.add_argument("--steps", nargs="+", help="step transforms accumulated before one resample")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--planes-out", help="directory for the three PGM planes")
    p.add_argument("--figure", help="PNG with the three planes")
    p.add_argument("--layout", action="store_true", help="downsample and pad to 256^3 first")
    p.add_argument("--preprocess-only", action="store_true",
                   help="segment and lay out the volume without resampling")
    p.set_defaults(func=cmd_standardize_volume)

    p = sub.add_parser("evaluate", help="compare predicted and reference planes")
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--report")
    p.add_argument("--batch", help="CSV manifest with case,pred,ref[,pred_b]")
    p.add_argument("--out-dir", default="evaluation")
    p.add_argument("--signed", action="store_true")
    p.add_argument("--alpha", type=float, default=0.01)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write synthetic test data")
    p.add_argument("--kind", choices=("landmarks", "volume", "model"), required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--hidden", type=int, default=0)
    p.add_argument("--max-angle", type=float, default=20.0)
    p.add_argument("--max-translation-mm", type=float, default=5.0)
    p.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64))
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--modes", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="landmarks to planes, transform and standardized volume")
    p.add_argument("--config", help="JSON config; command-line flags override it")
    p.add_argument("--landmarks")
    p.add_argument("--model")
    p.add_argument("--volume")
    p.add_argument("--out")
    p.add_argument("--wp", type=float)
    p.add_argument("--completion-rounds", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--rigid", action="store_true")
    p.add_argument("--no-complete", action="store_true")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--preprocess", action="store_true")
    p.add_argument("--figure", action="store_true", help="also save planes.png")
    p.add_argument("--batch", help="CSV manifest with case,landmarks[,volume]")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    # pipeline resolves its seed after reading --config (flag > config file > env)
    if getattr(args, "seed", 0) is None and args.command != "pipeline":
        args.seed = default_seed()
    try:
        return args.func(args)
    except FetalFaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
