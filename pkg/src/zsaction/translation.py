"""Object-to-action affinity, top-T sparsification and video score normalization."""
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from zsaction.errors import InputError, NumericalError

DENSE = "dense"
ACTION_TOP = "action-top-T_z"

RAW = "raw"
POWER_L2 = "power+l2"

NORMALIZE_FIRST = "normalize-first"
SPARSIFY_FIRST = "sparsify-first"


@dataclass(frozen=True, eq=False)
class ObjectScores:
    """Object probabilities p(y|v) for one video, frame or tube.

    ``mask`` marks the entries kept by video sparsification (None: all kept).
    """

    values: np.ndarray
    id: str = ""
    source: str = "video"
    normalization: str = RAW
    mask: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise InputError(f"object scores for {self.id!r} must be finite")
        if self.normalization == RAW and np.any(v < 0):
            raise InputError(f"raw object scores for {self.id!r} must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """m x n affinities g_yz between m objects (rows) and n actions (columns)."""

    objects: List[str]
    actions: List[str]
    values: np.ndarray
    sparsity: str = DENSE
    t_z: Optional[int] = None
    mask: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape != (len(self.objects), len(self.actions)):
            raise InputError("affinity values must be (len(objects), len(actions))")
        if not np.all(np.isfinite(v)):
            raise InputError("affinity values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "objects", list(self.objects))
        object.__setattr__(self, "actions", list(self.actions))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def to_dict(self):
        out = {
            "objects": self.objects,
            "actions": self.actions,
            "sparsity": self.sparsity,
            "t_z": self.t_z,
            "values": [[float(x) for x in row] for row in self.values],
        }
        if self.mask is not None:
            out["mask"] = [[int(x) for x in row] for row in self.mask]
        return out

    @classmethod
    def from_dict(cls, d):
        mask = d.get("mask")
        if mask is not None:
            mask = np.array(mask, dtype=bool)
        return cls(d["objects"], d["actions"], np.array(d["values"], dtype=np.float64).reshape(
            len(d["objects"]), len(d["actions"])), d.get("sparsity", DENSE), d.get("t_z"), mask)


def top_mask(values, t: int, candidates=None) -> np.ndarray:
    """Boolean mask of the ``t`` largest entries of a 1-D array.

    Ties go to the lower index. Only ``candidates`` (if given) are eligible.
    """
    values = np.asarray(values)
    idx = np.arange(values.shape[0]) if candidates is None else np.flatnonzero(candidates)
    order = idx[np.argsort(-values[idx], kind="stable")]
    mask = np.zeros(values.shape[0], dtype=bool)
    mask[order[:t]] = True
    return mask


def average_frame_scores(frames: Sequence[ObjectScores]) -> ObjectScores:
    if len(frames) == 0:
        raise InputError("cannot average an empty list of frame scores")
    m = len(frames[0])
    if any(len(f) != m for f in frames):
        raise InputError("frame score vectors differ in length")
    stacked = np.stack([f.values for f in frames])
    return ObjectScores(stacked.mean(axis=0), id=frames[0].id, source="frame-average")


def power_l2_normalize(p: ObjectScores, alpha: float = 0.5) -> ObjectScores:
    """Signed power ``sign(x)|x|^alpha`` followed by l2 normalization."""
    if not 0 < alpha <= 1:
        raise InputError(f"alpha must be in (0, 1], got {alpha}")
    v = np.sign(p.values) * np.abs(p.values) ** alpha
    norm = float(np.linalg.norm(v))
    if norm == 0:
        raise NumericalError(f"cannot normalize all-zero scores for {p.id!r}")
    return replace(p, values=v / norm, normalization=POWER_L2)


def build_affinity(object_encodings, action_encodings, objects=None, actions=None) -> AffinityMatrix:
    """g[i, j] = <object_i, action_j>."""
    O = np.asarray(object_encodings, dtype=np.float64)
    A = np.asarray(action_encodings, dtype=np.float64)
    if O.ndim != 2 or A.ndim != 2 or O.shape[0] == 0 or A.shape[0] == 0:
        raise InputError("encodings must be non-empty 2-D matrices")
    if O.shape[1] != A.shape[1]:
        raise InputError(f"encoding dimension mismatch: objects {O.shape[1]}, actions {A.shape[1]}")
    objects = list(objects) if objects is not None else [str(i) for i in range(O.shape[0])]
    actions = list(actions) if actions is not None else [str(j) for j in range(A.shape[0])]
    return AffinityMatrix(objects, actions, O @ A.T)


def sparsify_action(g: AffinityMatrix, t_z: int) -> AffinityMatrix:
    """Keep, per action column, the ``t_z`` largest affinities; zero the rest.

    Selection is by value (negative affinities are ranked below positive
    ones). Kept values are not renormalized.
    """
    if t_z < 1:
        raise InputError(f"T_z must be >= 1, got {t_z}")
    prev = g.mask if g.mask is not None else np.ones(g.values.shape, dtype=bool)
    mask = np.zeros(g.values.shape, dtype=bool)
    for j in range(g.n):
        mask[:, j] = top_mask(g.values[:, j], t_z, prev[:, j])
    mask.setflags(write=False)
    return replace(g, values=np.where(mask, g.values, 0.0), sparsity=ACTION_TOP, t_z=t_z, mask=mask)


def sparsify_video(p: ObjectScores, t_v: int) -> ObjectScores:
    """Keep the ``t_v`` largest object scores; zero the rest."""
    if t_v < 1:
        raise InputError(f"T_v must be >= 1, got {t_v}")
    mask = top_mask(p.values, t_v, p.mask)
    mask.setflags(write=False)
    return replace(p, values=np.where(mask, p.values, 0.0), mask=mask)


def prepare_scores(
    p: ObjectScores,
    t_v: Optional[int] = None,
    alpha: float = 0.5,
    normalize: bool = True,
    order: str = NORMALIZE_FIRST,
) -> ObjectScores:
    """Video-side pipeline applied before scoring: power+l2, then top-T_v.

    ``order="sparsify-first"`` masks before normalizing. ``t_v=None``
    disables video sparsity.
    """
    if order not in (NORMALIZE_FIRST, SPARSIFY_FIRST):
        raise InputError(f"unknown pipeline order {order!r}")
    if order == SPARSIFY_FIRST and t_v is not None:
        p = sparsify_video(p, t_v)
    if normalize:
        p = power_l2_normalize(p, alpha)
    if order == NORMALIZE_FIRST and t_v is not None:
        p = sparsify_video(p, t_v)
    return p
