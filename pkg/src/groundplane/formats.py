"""JSONL record formats.

Every data file holds one JSON object per line. Coordinates are pixels,
angles degrees. Field names are fixed; see ``docs/FORMATS.md``.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator

from .codec import Detection, RawPrediction
from .geometry import InvalidParallelogram, Parallelogram
from .metrics import GroundTruthLabel


class FormatError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _finite(values) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def _point(v, what: str) -> tuple[float, float]:
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and _finite(v)):
        raise ValueError(f"{what} must be a finite [x, y] pair")
    return float(v[0]), float(v[1])


def _footprint(rec: dict) -> Parallelogram:
    verts = rec.get("vertices")
    if not isinstance(verts, list) or len(verts) != 4:
        raise ValueError("vertices must hold 4 [x, y] pairs")
    pts = [_point(v, "vertex") for v in verts]
    center = _point(rec.get("center"), "center")
    try:
        return Parallelogram(pts, center, atol=1e-6)
    except InvalidParallelogram as exc:
        raise ValueError(str(exc)) from None


def _footprint_fields(fp: Parallelogram) -> dict:
    return {
        "vertices": [[v.x, v.y] for v in fp.vertices],
        "center": [fp.center.x, fp.center.y],
    }


def label_record(image_id: str, label: GroundTruthLabel, **extra) -> dict:
    return {"image_id": image_id, "class_id": label.class_id, **_footprint_fields(label.footprint), **extra}


def detection_record(image_id: str, det: Detection) -> dict:
    return {
        "image_id": image_id,
        "class_id": det.class_id,
        "confidence": det.confidence,
        **_footprint_fields(det.footprint),
    }


def raw_record(image_id: str, raw: RawPrediction) -> dict:
    return {
        "image_id": image_id,
        "anchor_index": raw.anchor_index,
        "v1": list(raw.v1),
        "v2": list(raw.v2),
        "v3": list(raw.v3),
        "class_scores": list(raw.class_scores),
    }


def parse_label(rec: dict) -> tuple[str, GroundTruthLabel]:
    return str(rec["image_id"]), GroundTruthLabel(_footprint(rec), int(rec["class_id"]))


def parse_detection(rec: dict) -> tuple[str, Detection]:
    conf = rec["confidence"]
    if not (_finite([conf]) and 0.0 <= conf <= 1.0):
        raise ValueError(f"confidence {conf!r} outside [0, 1]")
    return str(rec["image_id"]), Detection(_footprint(rec), int(rec["class_id"]), float(conf))


def parse_raw(rec: dict) -> tuple[str, RawPrediction]:
    scores = rec["class_scores"]
    if not (isinstance(scores, list) and scores and _finite(scores) and all(0.0 <= s <= 1.0 for s in scores)):
        raise ValueError("class_scores must be a non-empty list of values in [0, 1]")
    idx = rec["anchor_index"]
    if not isinstance(idx, int) or idx < 0:
        raise ValueError(f"anchor_index must be a non-negative integer, got {idx!r}")
    return str(rec["image_id"]), RawPrediction(
        idx,
        _point(rec["v1"], "v1"),
        _point(rec["v2"], "v2"),
        _point(rec["v3"], "v3"),
        tuple(float(s) for s in scores),
    )


def dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise FormatError(path, lineno, "record must be a JSON object")
            yield lineno, rec


def _load(path, parse) -> list:
    out = []
    for lineno, rec in iter_jsonl(path):
        try:
            out.append(parse(rec))
        except KeyError as exc:
            raise FormatError(path, lineno, f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise FormatError(path, lineno, str(exc)) from None
    return out


def load_labels(path) -> list[tuple[str, GroundTruthLabel]]:
    return _load(path, parse_label)


def load_detections(path) -> list[tuple[str, Detection]]:
    return _load(path, parse_detection)


def load_raw(path) -> list[tuple[str, RawPrediction]]:
    return _load(path, parse_raw)


def group_by_image(items: Iterable[tuple[str, object]]) -> dict[str, list]:
    out: dict[str, list] = defaultdict(list)
    for image_id, item in items:
        out[image_id].append(item)
    return dict(out)
