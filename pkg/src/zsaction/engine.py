"""Zero-shot decisions: classification, retrieval and tube localization.

All scores are sum_y p_y * g_yz accumulated in ascending object order, so a
score is bit-identical however videos or tubes are batched. Every ranking
breaks ties by ascending index (actions, tubes) or ascending id (videos).
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from zsaction.errors import InputError
from zsaction.evaluation import tube_overlap
from zsaction.translation import AffinityMatrix, ObjectScores, prepare_scores


@dataclass(frozen=True)
class ScorePipeline:
    """Video-side preprocessing shared by videos and tubes."""

    t_v: Optional[int] = 100
    alpha: float = 0.5
    normalize: bool = True
    order: str = "normalize-first"

    def __call__(self, p: ObjectScores) -> ObjectScores:
        return prepare_scores(p, self.t_v, self.alpha, self.normalize, self.order)


@dataclass(frozen=True)
class TubeProposal:
    video_id: str
    tube_id: str
    frames: Tuple[Tuple[int, Tuple[float, float, float, float]], ...]
    scores: Optional[ObjectScores] = None

    def __post_init__(self):
        frames = tuple((int(f), tuple(float(c) for c in box)) for f, box in self.frames)
        if not frames:
            raise InputError(f"tube {self.tube_id!r} has no frames")
        for (f0, _), (f1, _) in zip(frames, frames[1:]):
            if f1 <= f0:
                raise InputError(f"tube {self.tube_id!r}: frame indices must be strictly increasing")
        for f, box in frames:
            if len(box) != 4 or box[2] <= 0 or box[3] <= 0:
                raise InputError(f"tube {self.tube_id!r}: frame {f} has a degenerate box")
        object.__setattr__(self, "frames", frames)

    @property
    def span(self) -> Tuple[int, int]:
        return self.frames[0][0], self.frames[-1][0]


@dataclass(frozen=True)
class Prediction:
    video_id: str
    ranking: List[Tuple[str, float]]
    tube: Optional[TubeProposal] = None

    @property
    def action(self) -> str:
        return self.ranking[0][0]

    @property
    def score(self) -> float:
        return self.ranking[0][1]


def _prepared(p: ObjectScores, pipeline: Optional[Callable]) -> ObjectScores:
    return pipeline(p) if pipeline is not None else p


def score_actions(p: ObjectScores, g: AffinityMatrix) -> np.ndarray:
    """Action scores sum_y p_y g_yz for every action z."""
    values = p.values if isinstance(p, ObjectScores) else np.asarray(p, dtype=np.float64)
    if values.shape[0] != g.m:
        raise InputError(f"score vector has {values.shape[0]} objects, affinity has {g.m}")
    terms = values[:, None] * g.values
    return np.add.accumulate(terms, axis=0)[-1].copy()


def _ranking(scores: np.ndarray, actions: Sequence[str]) -> List[Tuple[str, float]]:
    order = np.argsort(-scores, kind="stable")
    return [(actions[j], float(scores[j])) for j in order]


def classify(p: ObjectScores, g: AffinityMatrix, pipeline: Optional[Callable] = None) -> Prediction:
    p = _prepared(p, pipeline)
    return Prediction(p.id, _ranking(score_actions(p, g), g.actions))


def retrieve(videos: Sequence[ObjectScores], action: str, g: AffinityMatrix,
             pipeline: Optional[Callable] = None) -> List[Tuple[str, float]]:
    """Videos ranked by their score for ``action``."""
    if not videos:
        raise InputError("retrieval needs at least one video")
    try:
        z = g.actions.index(action)
    except ValueError:
        raise InputError(f"unknown action {action!r}") from None
    scored = [(v.id, float(score_actions(_prepared(v, pipeline), g)[z])) for v in videos]
    return sorted(scored, key=lambda t: (-t[1], t[0]))


def _tube_table(tubes, g, pipeline):
    if not tubes:
        raise InputError("localization needs at least one tube proposal")
    vid = tubes[0].video_id
    if any(t.video_id != vid for t in tubes):
        raise InputError("all tube proposals must belong to the same video")
    return np.stack([score_actions(_prepared(t.scores, pipeline), g) for t in tubes])


def localize(tubes: Sequence[TubeProposal], g: AffinityMatrix, pipeline: Optional[Callable] = None) -> Prediction:
    """Best (action, tube) pair over all proposals of one video."""
    S = _tube_table(tubes, g, pipeline)
    # row-major argmax picks the lowest tube, then lowest action, among ties
    u = int(np.argmax(S.max(axis=1)))
    return Prediction(tubes[u].video_id, _ranking(S[u], g.actions), tubes[u])


def top_detections(tubes: Sequence[TubeProposal], g: AffinityMatrix, limit: int = 5, nms: float = 0.3,
                   pipeline: Optional[Callable] = None) -> List[Prediction]:
    """Greedy non-maximum suppression over tubes scored by their best action.

    A tube is dropped when its overlap with an already kept tube exceeds
    ``nms``.
    """
    if limit < 1:
        raise InputError("detection limit must be >= 1")
    if not 0 <= nms <= 1:
        raise InputError("NMS overlap threshold must be in [0, 1]")
    S = _tube_table(tubes, g, pipeline)
    best = S.max(axis=1)
    kept: List[int] = []
    for u in np.argsort(-best, kind="stable"):
        if len(kept) == limit:
            break
        if all(tube_overlap(tubes[u], tubes[k]) <= nms for k in kept):
            kept.append(int(u))
    return [Prediction(tubes[u].video_id, _ranking(S[u], g.actions), tubes[u]) for u in kept]
