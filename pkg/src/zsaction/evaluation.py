"""Metrics: average class accuracy, average precision, tube overlap, AUC curves.

Spatio-temporal overlap of two tubes is the per-frame box IoU averaged over
the union of their annotated frames, counting 0 on frames where only one
tube has a box.

Localization AUC at an overlap threshold: all detections are pooled and
sorted by score. A detection is a true positive when its action matches the
video's ground truth and it overlaps an unmatched ground-truth tube of that
action by at least the threshold (greedy, in score order). The ROC walks the
sorted list with TPR = TP / #ground-truth tubes and FPR = FP / #detections;
the curve is held at its final TPR up to ``max_fpr`` and the area is divided
by ``max_fpr``. Because the FPR denominator does not depend on the
threshold, the resulting curve is non-increasing in the threshold.
"""
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from zsaction.errors import InputError


class NoPositivesWarning(UserWarning):
    pass


@dataclass
class MetricReport:
    name: str
    value: float
    per_class: Dict[str, float] = field(default_factory=dict)
    curve: List[Tuple[float, float]] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "metric": self.name,
            "value": self.value,
            "per_class": dict(sorted(self.per_class.items())),
            "curve": [[t, v] for t, v in self.curve],
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class GroundTruthTube:
    video_id: str
    action: str
    frames: Tuple[Tuple[int, Tuple[float, float, float, float]], ...]


def _predicted_action(pred):
    return pred if isinstance(pred, str) else pred.action


def average_class_accuracy(predictions, truth: Mapping[str, str]) -> MetricReport:
    """Mean over true classes of the fraction of that class's videos predicted correctly.

    ``predictions`` maps video id to a predicted action name or Prediction;
    a sequence of Predictions is also accepted.
    """
    if not isinstance(predictions, Mapping):
        predictions = {p.video_id: p for p in predictions}
    missing = [v for v in predictions if v not in truth]
    if missing:
        raise InputError(f"{len(missing)} predicted video(s) have no ground truth, e.g. {missing[0]!r}")
    correct = defaultdict(int)
    total = defaultdict(int)
    for vid, pred in predictions.items():
        cls = truth[vid]
        total[cls] += 1
        correct[cls] += _predicted_action(pred) == cls
    per_class = {c: correct[c] / total[c] for c in total}
    value = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return MetricReport("average_class_accuracy", value, per_class)


def average_precision(ranking: Sequence[str], positives) -> float:
    """Non-interpolated AP: mean precision at the rank of each positive.

    Returns 0.0 (with a NoPositivesWarning) when there are no positives.
    Positives that never appear in the ranking count as retrieved at no rank,
    i.e. they contribute precision 0.
    """
    if len(ranking) == 0:
        raise InputError("average precision needs a non-empty ranking")
    positives = set(positives)
    if not positives:
        warnings.warn("no positives; AP defined as 0", NoPositivesWarning, stacklevel=2)
        return 0.0
    hits = 0
    total = 0.0
    for rank, item in enumerate(ranking, start=1):
        if item in positives:
            hits += 1
            total += hits / rank
    return total / len(positives)


def mean_average_precision(rankings: Mapping[str, Sequence], truth: Mapping[str, str]) -> MetricReport:
    """mAP over actions. ``rankings[action]`` lists video ids (or (id, score) pairs) best first.

    Videos absent from ``truth`` are negatives for every action.
    """
    per_class = {}
    flags = []
    for action, ranking in rankings.items():
        ids = [r if isinstance(r, str) else r[0] for r in ranking]
        positives = {v for v, a in truth.items() if a == action}
        if not positives:
            flags.append(f"no_positives:{action}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoPositivesWarning)
            per_class[action] = average_precision(ids, positives)
    value = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return MetricReport("mean_average_precision", value, per_class, flags=flags)


def box_iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise InputError("boxes must have positive width and height")
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def _frames(tube):
    frames = tube.frames if hasattr(tube, "frames") else tube
    out = dict((int(f), tuple(box)) for f, box in frames)
    if not out:
        raise InputError("tube has no frames")
    return out


def tube_overlap(a, b) -> float:
    fa, fb = _frames(a), _frames(b)
    union = fa.keys() | fb.keys()
    shared = fa.keys() & fb.keys()
    return sum(box_iou(fa[f], fb[f]) for f in sorted(shared)) / len(union)


def _roc_auc(outcomes: Sequence[bool], n_positive: int, n_detections: int, max_fpr: float) -> float:
    if n_positive == 0 or n_detections == 0:
        return 0.0
    area = 0.0
    x = 0.0
    tp = 0
    for is_tp in outcomes:
        if is_tp:
            tp += 1
            continue
        nx = x + 1.0 / n_detections
        area += tp / n_positive * (min(nx, max_fpr) - min(x, max_fpr))
        x = nx
    area += tp / n_positive * (max_fpr - min(x, max_fpr))
    return area / max_fpr


def detection_outcomes(detections, truths: Mapping[str, Sequence[GroundTruthTube]], threshold: float) -> List[bool]:
    """True/false positive flag for each detection, in score order."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, detections[i].video_id, i))
    matched = set()
    outcomes = []
    for i in order:
        det = detections[i]
        best, best_ov = None, -1.0
        for j, gt in enumerate(truths.get(det.video_id, ())):
            if (det.video_id, j) in matched or gt.action != det.action:
                continue
            ov = tube_overlap(det.tube, gt)
            if ov >= threshold and ov > best_ov:
                best, best_ov = j, ov
        if best is not None:
            matched.add((det.video_id, best))
        outcomes.append(best is not None)
    return outcomes


def auc_vs_threshold(detections, truths: Mapping[str, Sequence[GroundTruthTube]], thresholds: Sequence[float],
                     max_fpr: float = 1.0) -> MetricReport:
    """Localization ROC AUC for each overlap threshold.

    ``detections`` is a flat list of Predictions carrying tubes (e.g. the
    NMS survivors of every video); ``truths`` maps video id to its
    ground-truth tubes.
    """
    if len(thresholds) == 0:
        raise InputError("at least one overlap threshold is required")
    if any(not 0 <= t <= 1 for t in thresholds) or list(thresholds) != sorted(thresholds):
        raise InputError("thresholds must be sorted and lie in [0, 1]")
    if not 0 < max_fpr <= 1:
        raise InputError("max_fpr must be in (0, 1]")
    n_pos = sum(len(v) for v in truths.values())
    curve = []
    for t in thresholds:
        outcomes = detection_outcomes(detections, truths, t)
        curve.append((float(t), _roc_auc(outcomes, n_pos, len(detections), max_fpr)))
    flags = ["no_ground_truth"] if n_pos == 0 else []
    value = sum(v for _, v in curve) / len(curve)
    return MetricReport("auc_vs_threshold", value, curve=curve, flags=flags)
