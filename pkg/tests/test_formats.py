import json

import pytest

from groundplane.codec import Detection, RawPrediction
from groundplane.datagen import SceneConfig, generate_scene
from groundplane.formats import (
    FormatError,
    detection_record,
    group_by_image,
    label_record,
    load_detections,
    load_labels,
    load_raw,
    raw_record,
    write_jsonl,
)
from groundplane.geometry import Parallelogram
from groundplane.metrics import GroundTruthLabel


def test_round_trip_all_record_types(tmp_path):
    s = generate_scene(SceneConfig(seed=5, jitter_sigma=1.0))
    write_jsonl(tmp_path / "l.jsonl", (label_record("x", l) for l in s.labels))
    write_jsonl(tmp_path / "d.jsonl", (detection_record("x", d) for d in s.predictions))
    write_jsonl(tmp_path / "r.jsonl", (raw_record("x", r) for r in s.raw))
    assert [l for _, l in load_labels(tmp_path / "l.jsonl")] == s.labels
    assert [d for _, d in load_detections(tmp_path / "d.jsonl")] == s.predictions
    assert [r for _, r in load_raw(tmp_path / "r.jsonl")] == s.raw


def _write(path, *lines):
    path.write_text("".join(l + "\n" for l in lines))
    return path


GOOD = {"image_id": "a", "class_id": 0, "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "center": [0.5, 0.5]}


@pytest.mark.parametrize(
    "bad, msg",
    [
        ("{not json", "invalid JSON"),
        ("[1, 2]", "JSON object"),
        (json.dumps({**GOOD, "vertices": [[0, 0], [1, 0], [1, 1], [0, 2]]}), "symmetric"),
        (json.dumps({k: v for k, v in GOOD.items() if k != "center"}), "center"),
        (json.dumps({k: v for k, v in GOOD.items() if k != "class_id"}), "class_id"),
    ],
)
def test_bad_label_reports_line(tmp_path, bad, msg):
    p = _write(tmp_path / "l.jsonl", json.dumps(GOOD), "", bad)
    with pytest.raises(FormatError, match=msg) as exc:
        load_labels(p)
    assert exc.value.line == 3


def test_detection_confidence_bounds(tmp_path):
    p = _write(tmp_path / "d.jsonl", json.dumps({**GOOD, "confidence": 1.5}))
    with pytest.raises(FormatError, match="confidence"):
        load_detections(p)


def test_raw_checks(tmp_path):
    rec = {"image_id": "a", "anchor_index": 3, "v1": [0, 0], "v2": [1, 0], "v3": [0, 1], "class_scores": [0.2]}
    p = _write(tmp_path / "r.jsonl", json.dumps(rec))
    assert load_raw(p) == [("a", RawPrediction(3, (0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.2,)))]
    for bad in ({**rec, "class_scores": [2.0]}, {**rec, "anchor_index": -1}, {**rec, "v1": [0]}):
        with pytest.raises(FormatError):
            load_raw(_write(tmp_path / "r.jsonl", json.dumps(bad)))


def test_labels_tolerate_small_invariant_error(tmp_path):
    rec = {**GOOD, "vertices": [[0, 0], [1, 0], [1, 1 + 5e-7], [0, 1]]}
    [(_, lab)] = load_labels(_write(tmp_path / "l.jsonl", json.dumps(rec)))
    assert isinstance(lab, GroundTruthLabel)


def test_group_by_image():
    d = Detection(Parallelogram([(0, 0), (1, 0), (1, 1), (0, 1)]))
    assert group_by_image([("b", d), ("a", d), ("b", d)]) == {"b": [d, d], "a": [d]}


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        write_jsonl("/dev/null", [{"x": float("nan")}])
