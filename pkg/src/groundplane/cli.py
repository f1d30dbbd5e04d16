"""Command-line entry point.

Subcommands: gen, eval, nms-bench, train-toy, convert, gradcheck.

Exit codes: 0 success, 1 a check failed (e.g. gradcheck over tolerance),
2 usage, config, or I/O error. Output directories default to ``$GROUNDPLANE_OUT``
(or ``./out``).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import _svg, datagen, formats
from .assignment import build_anchor_grid
from .codec import Detection, decode_predictions, nms_benchmark
from .formats import FormatError
from .metrics import evaluate
from .toytrain import TrainConfig, decode_and_eval, gradient_check_suite, train_offsets

ENV_OUT = "GROUNDPLANE_OUT"


class UsageError(Exception):
    pass


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(ENV_OUT) or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# -- configuration --------------------------------------------------------------

_RANGE_KEYS = ("vehicles", "length", "width", "region_x", "region_y", "yaw", "confidence")
_CAMERA_KEYS = {"camera_mode", "camera_height", "camera_pitch_deg", "camera_focal", "camera_distance_scale"}


def read_config(path: str | None) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments. No sections needed."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config {path}: {exc}") from None
    return dict(parser["config"])


def scene_config(values: dict[str, str], seed: int | None) -> datagen.SceneConfig:
    kw: dict = {}
    try:
        for key in _RANGE_KEYS:
            lo, hi = values.get(f"{key}_min"), values.get(f"{key}_max")
            if lo is not None or hi is not None:
                default = getattr(datagen.SceneConfig(), key)
                cast = int if key == "vehicles" else float
                kw[key] = (cast(lo) if lo is not None else default[0], cast(hi) if hi is not None else default[1])
        for key, cast in (
            ("predictions_per_vehicle", int),
            ("jitter_sigma", float),
            ("stride", float),
            ("max_attempts", int),
            ("seed", int),
        ):
            if key in values:
                kw[key] = cast(values[key])
        if "image_width" in values or "image_height" in values:
            w, h = datagen.SceneConfig().image_size
            kw["image_size"] = (int(values.get("image_width", w)), int(values.get("image_height", h)))
        if seed is not None:
            kw["seed"] = seed
        unknown = set(values) - set(kw) - _CAMERA_KEYS - {"images", "image_width", "image_height"} - {
            f"{k}_{s}" for k in _RANGE_KEYS for s in ("min", "max")
        }
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return datagen.SceneConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scene config: {exc}") from None



def camera_from(values: dict[str, str], image_size, mode: str | None = None) -> datagen.CameraModel:
    try:
        return datagen.elevated_camera(
            height=float(values.get("camera_height", 10.0)),
            pitch_deg=float(values.get("camera_pitch_deg", 45.0)),
            focal=float(values.get("camera_focal", 600.0)),
            image_size=image_size,
            mode=mode or values.get("camera_mode", "pinhole"),
            distance_scale=float(values.get("camera_distance_scale", 1.0)),
        )
    except ValueError as exc:
        raise UsageError(f"bad camera config: {exc}") from None


def _parse_floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 or not math.isfinite(v) for v in vals):
        raise UsageError(f"expected non-negative numbers, got {text!r}")
    return vals


# -- commands --------------------------------------------------------------------


def cmd_gen(args) -> int:
    values = read_config(args.config)
    cfg = scene_config(values, args.seed)
    cam = camera_from(values, cfg.image_size, args.camera)
    n_images = args.images if args.images is not None else int(values.get("images", 1))
    if n_images < 1:
        raise UsageError("--images must be >= 1")
    out = _out_dir(args.out)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        scenes = datagen.generate_scenes(cfg, n_images, cam, map_fn=pool.map)

    formats.write_jsonl(
        out / "boxes.jsonl",
        (
            {
                "image_id": s.image_id,
                "class_id": 0,
                "center": list(b.center),
                "length": b.length,
                "width": b.width,
                "yaw_deg": math.degrees(b.yaw),
            }
            for s in scenes
            for b in s.boxes
        ),
    )
    formats.write_jsonl(
        out / "labels.jsonl",
        (
            formats.label_record(s.image_id, lab, residual_px=res)
            for s in scenes
            for lab, res in zip(s.labels, s.residuals)
        ),
    )
    formats.write_jsonl(
        out / "predictions.jsonl",
        (formats.detection_record(s.image_id, d) for s in scenes for d in s.predictions),
    )
    formats.write_jsonl(
        out / "raw.jsonl", (formats.raw_record(s.image_id, r) for s in scenes for r in s.raw)
    )
    written = ["boxes.jsonl", "labels.jsonl", "predictions.jsonl", "raw.jsonl"]
    if args.sigmas:
        seeds = datagen.derive_seeds(cfg.seed, n_images)
        for sigma in _parse_floats(args.sigmas):
            name = f"predictions_sigma_{sigma:g}.jsonl"
            recs = []
            for s, sd in zip(scenes, seeds):
                dets = datagen.jitter_predictions(
                    s.labels, sigma, cfg.predictions_per_vehicle or 1, cfg.confidence, sd
                )
                recs.extend(formats.detection_record(s.image_id, d) for d in dets)
            formats.write_jsonl(out / name, recs)
            written.append(name)
    _write_json(
        out / "scene.json",
        {"config": {k: v for k, v in cfg.__dict__.items()}, "camera": cam.__dict__, "images": n_images},
    )
    print(f"wrote {len(scenes)} scene(s) to {out}: {', '.join(written)}")
    return 0


def _load_eval_inputs(preds_path, labels_path):
    preds = formats.group_by_image(formats.load_detections(preds_path))
    labels = formats.group_by_image(formats.load_labels(labels_path))
    return preds, labels


def cmd_eval(args) -> int:
    preds, labels = _load_eval_inputs(args.preds, args.labels)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        report = evaluate(preds, labels, map_fn=pool.map)
    out = _out_dir(args.out)
    _write_json(out / "report.json", report.to_dict())
    _write_text(out / "report.txt", report.to_text())
    sys.stdout.write(report.to_text())
    return 0


def _tile_by_image(groups: dict[str, list[Detection]]) -> list[Detection]:
    """Shift each image's detections into its own x-band so images never interact."""
    out: list[Detection] = []
    cursor = 0.0
    for image_id in sorted(groups):
        dets = groups[image_id]
        if not dets:
            continue
        xs = [v.x for d in dets for v in d.footprint.vertices]
        dx = cursor - min(xs)
        out.extend(Detection(d.footprint.translate(dx, 0.0), d.class_id, d.confidence) for d in dets)
        cursor += max(xs) - min(xs) + 100.0
    return out


def cmd_nms_bench(args) -> int:
    if args.preds_raw:
        grid = build_anchor_grid(args.image_width, args.image_height, args.stride)
        raws = formats.group_by_image(formats.load_raw(args.preds_raw))
        groups, dropped = {}, 0
        for image_id, items in raws.items():
            groups[image_id], n = decode_predictions(items, grid, args.conf_thresh)
            dropped += n
        dets = _tile_by_image(groups)
    else:
        if args.synthetic < 2:
            raise UsageError("--synthetic needs N >= 2")
        dets = datagen.synthetic_detections(args.synthetic, seed=args.seed)
        dropped = 0
    if len(dets) < 2:
        raise UsageError("need at least two detections to benchmark")
    report = nms_benchmark(dets, args.iou_thresh, args.reps)
    out = _out_dir(args.out)
    summary = {**report.to_dict(), "n_detections": len(dets), "degenerate_dropped": dropped,
               "iou_threshold": args.iou_thresh, "repetitions": args.reps}
    _write_json(out / "nms_bench.json", summary)
    lines = ["exact_iou,aabb_iou"] + [f"{e!r},{a!r}" for e, a in report.pairs]
    _write_text(out / "nms_pairs.csv", "\n".join(lines) + "\n")
    _write_text(
        out / "nms_pairs.svg",
        _svg.scatter_plot(
            [e for e, _ in report.pairs], [a for _, a in report.pairs],
            "exact vs box IoU", "exact IoU", "box IoU",
        ),
    )
    print(
        f"{len(dets)} detections: exact {report.exact_time * 1e3:.2f} ms, approx {report.approx_time * 1e3:.2f} ms "
        f"(x{report.speedup:.2f}); mean |IoU diff| {report.mean_abs_iou_discrepancy:.4f} over {report.n_pairs} pairs; "
        f"kept {report.kept_exact}/{report.kept_approx}, disagreement {report.disagreement_rate:.3f}"
    )
    return 0


def cmd_train_toy(args) -> int:
    if args.scene:
        labels_by_image = formats.group_by_image(formats.load_labels(args.scene))
        if not labels_by_image:
            raise UsageError(f"{args.scene} holds no labels")
        image_id = args.image_id or sorted(labels_by_image)[0]
        if image_id not in labels_by_image:
            raise UsageError(f"image {image_id!r} not in {args.scene}")
        labels = labels_by_image[image_id]
    else:
        scene = datagen.toy_scene(args.seed)
        image_id, labels = scene.image_id, scene.labels
    loss = {"chamfer": "chamfer_mse", "ordered": "ordered_mse"}[args.loss]
    try:
        cfg = TrainConfig(loss=loss, lr=args.lr, steps=args.steps, flip_prob=args.flip_prob, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    grid = build_anchor_grid(args.image_width, args.image_height, args.stride)
    trace = train_offsets(labels, grid, args.eta, cfg)
    out = _out_dir(args.out)
    _write_text(out / "trace.csv", trace.to_csv())
    _write_text(
        out / "trace.svg",
        _svg.line_plot(trace.losses + [trace.final_loss], f"{loss} training loss", "step", "mean loss", log=True),
    )
    report, kept = decode_and_eval(trace.table, labels, image_id=image_id)
    formats.write_jsonl(out / "detections.jsonl", (formats.detection_record(image_id, d) for d in kept))
    _write_json(
        out / "train_report.json",
        {
            "config": cfg.__dict__,
            "image_id": image_id,
            "active_anchors": len(trace.table.assignments),
            "initial_loss": trace.losses[0] if trace.losses else trace.final_loss,
            "final_loss": trace.final_loss,
            "mean_vertex_error": trace.mean_vertex_error,
            "eval": report.to_dict(),
        },
    )
    print(
        f"{loss}: {len(trace.table.assignments)} active anchors, final loss {trace.final_loss:.6g}, "
        f"mean vertex error {trace.mean_vertex_error:.3g} px, kept {len(kept)} detection(s)"
    )
    return 0


def cmd_convert(args) -> int:
    if args.to != "label":
        raise UsageError("only --to label is supported")
    values = read_config(args.camera) if args.camera not in (None, "affine", "pinhole") else {}
    mode = args.camera if args.camera in ("affine", "pinhole") else None
    cam = camera_from(values, (args.image_width, args.image_height), mode)
    records = []
    for lineno, rec in formats.iter_jsonl(args.input):
        try:
            image_id, class_id = str(rec["image_id"]), int(rec.get("class_id", 0))
            if args.source == "box3d":
                yaw = math.radians(float(rec["yaw_deg"])) if "yaw_deg" in rec else float(rec["yaw"])
                box = datagen.Box3D(tuple(float(v) for v in rec["center"]), float(rec["length"]), float(rec["width"]), yaw)
                fp, residual = datagen.box_to_label(box, cam)
                extra = {"residual_px": residual}
            else:
                pa, pb, pc = rec["corners"]
                fp, extra = datagen.complete_lshape(pa, pb, pc), {}
        except KeyError as exc:
            raise FormatError(args.input, lineno, f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise FormatError(args.input, lineno, str(exc)) from None
        records.append(formats.label_record(image_id, datagen.GroundTruthLabel(fp, class_id), **extra))
    out = Path(args.out) if args.out else _out_dir(None) / "labels.jsonl"
    formats.write_jsonl(out, records)
    print(f"converted {len(records)} record(s) to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    variant = {"chamfer": "chamfer_mse", "ordered": "ordered_mse"}[args.loss]
    summary = gradient_check_suite(args.samples, args.h, args.seed, variant)
    ok = summary.passed(args.tol)
    print(
        f"gradcheck {variant}: max rel err {summary.max_rel_err:.3e} over {summary.checked} sample(s), "
        f"{summary.skipped} skipped near ties, h={args.h:g} -> {'PASS' if ok else 'FAIL'} (tol {args.tol:g})"
    )
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="groundplane", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic scenes, labels, and predictions")
    g.add_argument("config", nargs="?", help="key = value scene/camera config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--images", type=int)
    g.add_argument("--camera", choices=["affine", "pinhole"])
    g.add_argument("--sigmas", help="comma-separated jitter sweep, one predictions file per value")
    g.add_argument("--workers", type=int, default=4)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("eval", help="score detections against labels")
    e.add_argument("--preds", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--out")
    e.add_argument("--workers", type=int, default=4)
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("nms-bench", help="time box-IoU vs exact-IoU NMS")
    src = n.add_mutually_exclusive_group(required=True)
    src.add_argument("--preds-raw")
    src.add_argument("--synthetic", type=int, metavar="N")
    n.add_argument("--iou-thresh", type=float, default=0.5)
    n.add_argument("--conf-thresh", type=float, default=0.1)
    n.add_argument("--reps", type=int, default=11)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--stride", type=float, default=16.0)
    n.add_argument("--image-width", type=int, default=1280)
    n.add_argument("--image-height", type=int, default=720)
    n.add_argument("--out")
    n.set_defaults(func=cmd_nms_bench)

    t = sub.add_parser("train-toy", help="fit per-anchor offsets by gradient descent")
    t.add_argument("--scene", help="labels JSONL; default is the built-in toy scene")
    t.add_argument("--image-id")
    t.add_argument("--loss", choices=["chamfer", "ordered"], default="chamfer")
    t.add_argument("--flip-prob", type=float, default=0.0)
    t.add_argument("--steps", type=int, default=500)
    t.add_argument("--lr", type=float, default=0.6)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--stride", type=float, default=16.0)
    t.add_argument("--eta", type=float, help="assignment tolerance in px (default 1.5 * stride)")
    t.add_argument("--image-width", type=int, default=1280)
    t.add_argument("--image-height", type=int, default=720)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train_toy)

    c = sub.add_parser("convert", help="turn 3D boxes or L-shape annotations into labels")
    c.add_argument("--from", dest="source", choices=["box3d", "lshape"], required=True)
    c.add_argument("--to", default="label")
    c.add_argument("--input", required=True)
    c.add_argument("--camera", default="pinhole", help="'affine', 'pinhole', or a config file")
    c.add_argument("--image-width", type=int, default=1280)
    c.add_argument("--image-height", type=int, default=720)
    c.add_argument("--out")
    c.set_defaults(func=cmd_convert)

    k = sub.add_parser("gradcheck", help="compare analytic and finite-difference loss gradients")
    k.add_argument("--samples", type=int, default=1000)
    k.add_argument("--h", type=float, default=1e-6)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--tol", type=float, default=1e-5)
    k.add_argument("--loss", choices=["chamfer", "ordered"], default="chamfer")
    k.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, FormatError, OSError) as exc:
        print(f"groundplane {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (datagen.PlacementFailure, datagen.BehindCamera, datagen.CollinearCorners, ValueError) as exc:
        print(f"groundplane {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
