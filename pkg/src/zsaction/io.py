"""Readers and writers for the tab-separated and JSON interchange files.

Floats are written with ``repr`` so every value reads back bit-identical.
Tab-separated files may carry ``# key=value`` metadata lines before the
header row.
"""
import csv
import json
import os
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from zsaction.engine import Prediction, TubeProposal
from zsaction.errors import InputError
from zsaction.evaluation import GroundTruthTube
from zsaction.translation import ObjectScores, average_frame_scores


def _fmt(x) -> str:
    return repr(float(x))


def _float(text, path, lineno):
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{path}:{lineno}: not a number: {text!r}") from None


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}: malformed JSON: {e.msg}") from None


def read_tsv(path) -> Tuple[Dict[str, str], List[Tuple[int, List[str]]]]:
    """Metadata dict and (line number, fields) rows. The header row is included."""
    meta: Dict[str, str] = {}
    rows = []
    try:
        f = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    with f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            rows.append((lineno, next(csv.reader([line], delimiter="\t"))))
    return meta, rows


def format_tsv(header: Sequence[str], rows, meta: Dict[str, object] = None) -> str:
    out = []
    for key, value in (meta or {}).items():
        out.append(f"# {key}={value}\n")
    lines = [list(header)] + [list(r) for r in rows]
    for r in lines:
        out.append("\t".join(str(c) for c in r) + "\n")
    return "".join(out)


# object scores

def read_scores(path) -> Tuple[List[str], List[ObjectScores]]:
    """Header ``id<TAB>obj_1 ... obj_m``; one row per video.

    Consecutive or repeated rows with the same id are treated as frames of
    that video and averaged.
    """
    _, rows = read_tsv(path)
    if not rows:
        raise InputError(f"{path}: missing header row")
    _, header = rows[0]
    objects = header[1:]
    if not objects:
        raise InputError(f"{path}:{rows[0][0]}: header lists no objects")
    frames: "OrderedDict[str, List[ObjectScores]]" = OrderedDict()
    for lineno, fields in rows[1:]:
        if len(fields) != len(objects) + 1:
            raise InputError(f"{path}:{lineno}: expected {len(objects) + 1} fields, got {len(fields)}")
        values = [_float(x, path, lineno) for x in fields[1:]]
        try:
            frames.setdefault(fields[0], []).append(ObjectScores(values, id=fields[0]))
        except InputError as e:
            raise InputError(f"{path}:{lineno}: {e}") from None
    videos = []
    for vid, fs in frames.items():
        videos.append(fs[0] if len(fs) == 1 else average_frame_scores(fs))
    return objects, videos


def format_scores(objects: Sequence[str], videos: Sequence[ObjectScores]) -> str:
    return format_tsv(["id"] + list(objects), ([v.id] + [_fmt(x) for x in v.values] for v in videos))


# tubes

def _parse_frames(raw):
    try:
        if not all(len(fr) == 5 for fr in raw):
            return None
        return tuple((int(fr[0]), tuple(float(c) for c in fr[1:])) for fr in raw)
    except (TypeError, ValueError):
        return None


def read_tubes(path) -> Tuple[List[str], "OrderedDict[str, List[TubeProposal]]"]:
    """Tube proposals with precomputed object scores, grouped by video.

    Layout::

        {"objects": [...],
         "videos": [{"video": "v1",
                     "tubes": [{"id": "t1", "span": [f0, f1],
                                "frames": [[f, x, y, w, h], ...],
                                "scores": [p_1, ..., p_m]}]}]}
    """
    doc = read_json(path)
    objs = doc.get("objects")
    if not isinstance(objs, list) or not objs:
        raise InputError(f"{path}: 'objects' must be a non-empty list")
    out: "OrderedDict[str, List[TubeProposal]]" = OrderedDict()
    for v in doc.get("videos", []):
        vid = str(v["video"])
        tubes = []
        for t in v.get("tubes", []):
            where = f"{path}: video {vid!r} tube {t.get('id')!r}"
            frames = _parse_frames(t.get("frames", []))
            if frames is None:
                raise InputError(f"{where}: frames must be [frame, x, y, w, h] lists")
            scores = t.get("scores")
            if scores is None or len(scores) != len(objs):
                raise InputError(f"{where}: expected {len(objs)} scores")
            try:
                tube = TubeProposal(vid, str(t["id"]), frames, ObjectScores(scores, id=vid, source="tube"))
            except InputError as e:
                raise InputError(f"{where}: {e}") from None
            if "span" in t and list(t["span"]) != list(tube.span):
                raise InputError(f"{where}: span {t['span']} does not match frames {list(tube.span)}")
            tubes.append(tube)
        out[vid] = tubes
    return objs, out


def tubes_document(objects, tubes_by_video) -> dict:
    return {
        "objects": list(objects),
        "videos": [
            {"video": vid, "tubes": [
                {"id": t.tube_id, "span": list(t.span),
                 "frames": [[f] + list(box) for f, box in t.frames],
                 "scores": [float(x) for x in t.scores.values]} for t in tubes]}
            for vid, tubes in tubes_by_video.items()
        ],
    }


def read_gt_tubes(path) -> Dict[str, List[GroundTruthTube]]:
    """Ground-truth tubes: same layout as tube files, with ``action`` instead of ``scores``."""
    doc = read_json(path)
    out: Dict[str, List[GroundTruthTube]] = {}
    for v in doc.get("videos", []):
        vid = str(v["video"])
        for t in v.get("tubes", []):
            frames = _parse_frames(t.get("frames", []))
            if not frames or "action" not in t:
                raise InputError(f"{path}: video {vid!r}: ground-truth tube needs frames and an action")
            TubeProposal(vid, str(t.get("id", "gt")), frames)  # validates frames
            out.setdefault(vid, []).append(GroundTruthTube(vid, str(t["action"]), frames))
    return out


def gt_tubes_document(truths: Dict[str, List[GroundTruthTube]]) -> dict:
    return {"videos": [
        {"video": vid, "tubes": [
            {"id": f"gt{j}", "action": gt.action, "frames": [[f] + list(box) for f, box in gt.frames]}
            for j, gt in enumerate(gts)]}
        for vid, gts in truths.items()]}


# ground truth and predictions

def read_ground_truth(path) -> Dict[str, str]:
    """``video<TAB>action`` rows; an optional header row ``video<TAB>action`` is skipped."""
    _, rows = read_tsv(path)
    truth: Dict[str, str] = {}
    for i, (lineno, fields) in enumerate(rows):
        if i == 0 and [f.lower() for f in fields] == ["video", "action"]:
            continue
        if len(fields) != 2:
            raise InputError(f"{path}:{lineno}: expected 'video<TAB>action'")
        if fields[0] in truth:
            raise InputError(f"{path}:{lineno}: duplicate video id {fields[0]!r}")
        truth[fields[0]] = fields[1]
    return truth


def format_ground_truth(truth: Dict[str, str]) -> str:
    return format_tsv(["video", "action"], truth.items())


PREDICTION_HEADER = ["video", "rank", "action", "score"]


def format_predictions(preds: Sequence[Prediction], meta=None, top: int = None) -> str:
    rows = []
    for p in preds:
        ranking = p.ranking if top is None else p.ranking[:top]
        for r, (action, score) in enumerate(ranking, start=1):
            rows.append([p.video_id, r, action, _fmt(score)])
    return format_tsv(PREDICTION_HEADER, rows, meta)


def predictions_document(preds: Sequence[Prediction], meta=None) -> dict:
    out = dict(meta or {})
    out["predictions"] = [
        {"video": p.video_id,
         "tube": p.tube.tube_id if p.tube is not None else None,
         "ranking": [[a, float(s)] for a, s in p.ranking]}
        for p in preds
    ]
    return out


def read_predictions(path) -> Dict[str, str]:
    """Top-ranked action per video from a predictions file (TSV or JSON)."""
    if str(path).endswith(".json"):
        doc = read_json(path)
        return {p["video"]: p["ranking"][0][0] for p in doc.get("predictions", []) if p["ranking"]}
    _, rows = read_tsv(path)
    if not rows or rows[0][1][:4] != PREDICTION_HEADER:
        raise InputError(f"{path}: expected header {' '.join(PREDICTION_HEADER)}")
    best: Dict[str, Tuple[int, str]] = {}
    for lineno, fields in rows[1:]:
        if len(fields) < 4:
            raise InputError(f"{path}:{lineno}: expected at least 4 fields")
        try:
            rank = int(fields[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: rank must be an integer") from None
        if fields[0] not in best or rank < best[fields[0]][0]:
            best[fields[0]] = (rank, fields[2])
    return {v: a for v, (_, a) in best.items()}


RANKING_HEADER = ["action", "rank", "video", "score"]


def format_rankings(rankings: Dict[str, List[Tuple[str, float]]], meta=None) -> str:
    rows = []
    for action, ranking in rankings.items():
        for r, (vid, score) in enumerate(ranking, start=1):
            rows.append([action, r, vid, _fmt(score)])
    return format_tsv(RANKING_HEADER, rows, meta)


def read_rankings(path) -> "OrderedDict[str, List[Tuple[str, float]]]":
    _, rows = read_tsv(path)
    if not rows or rows[0][1] != RANKING_HEADER:
        raise InputError(f"{path}: expected header {' '.join(RANKING_HEADER)}")
    entries: "OrderedDict[str, List[Tuple[int, str, float]]]" = OrderedDict()
    for lineno, fields in rows[1:]:
        if len(fields) != 4:
            raise InputError(f"{path}:{lineno}: expected 4 fields")
        try:
            rank = int(fields[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: rank must be an integer") from None
        entries.setdefault(fields[0], []).append((rank, fields[2], _float(fields[3], path, lineno)))
    return OrderedDict((a, [(v, s) for _, v, s in sorted(e)]) for a, e in entries.items())


DETECTION_HEADER = ["video", "rank", "action", "score", "tube"]


def format_detections(dets_by_video: Dict[str, List[Prediction]], meta=None) -> str:
    rows = []
    for vid, dets in dets_by_video.items():
        for r, d in enumerate(dets, start=1):
            rows.append([vid, r, d.action, _fmt(d.score), d.tube.tube_id])
    return format_tsv(DETECTION_HEADER, rows, meta)


def read_detections(path, tubes_by_video) -> List[Prediction]:
    """Detections joined back to their tube geometry from the tube file."""
    _, rows = read_tsv(path)
    if not rows or rows[0][1] != DETECTION_HEADER:
        raise InputError(f"{path}: expected header {' '.join(DETECTION_HEADER)}")
    out = []
    for lineno, fields in rows[1:]:
        if len(fields) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 fields")
        vid, _, action, score, tube_id = fields
        tube = next((t for t in tubes_by_video.get(vid, []) if t.tube_id == tube_id), None)
        if tube is None:
            raise InputError(f"{path}:{lineno}: tube {tube_id!r} of video {vid!r} not in tube file")
        out.append(Prediction(vid, [(action, _float(score, path, lineno))], tube))
    return out


# encoded labels

def format_encodings(names: Sequence[str], matrix: np.ndarray, meta) -> str:
    width = matrix.shape[1] if matrix.ndim == 2 else 0
    header = ["label"] + [f"e{i}" for i in range(width)]
    return format_tsv(header, ([n] + [_fmt(x) for x in row] for n, row in zip(names, matrix)), meta)


def read_encodings(path) -> Tuple[Dict[str, str], List[str], np.ndarray]:
    meta, rows = read_tsv(path)
    if not rows:
        raise InputError(f"{path}: missing header row")
    width = len(rows[0][1]) - 1
    names, vals = [], []
    for lineno, fields in rows[1:]:
        if len(fields) != width + 1:
            raise InputError(f"{path}:{lineno}: expected {width + 1} fields")
        names.append(fields[0])
        vals.append([_float(x, path, lineno) for x in fields[1:]])
    return meta, names, np.array(vals, dtype=np.float64).reshape(len(vals), width)
