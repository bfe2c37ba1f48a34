"""Run configuration: defaults, JSON config files and command-line overrides."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import List, Optional

from zsaction.errors import InputError

PATH_FIELDS = (
    "embeddings", "object_labels", "action_labels", "labels", "scores", "tubes",
    "ground_truth", "gt_tubes", "model", "affinity", "predictions", "rankings", "detections",
)


@dataclass
class RunConfig:
    # inputs
    embeddings: Optional[str] = None
    object_labels: Optional[str] = None
    action_labels: Optional[str] = None
    labels: Optional[str] = None
    scores: Optional[str] = None
    tubes: Optional[str] = None
    ground_truth: Optional[str] = None
    gt_tubes: Optional[str] = None
    model: Optional[str] = None
    affinity: Optional[str] = None
    predictions: Optional[str] = None
    rankings: Optional[str] = None
    detections: Optional[str] = None

    # label encoding
    encoder: str = "fwv"
    k: int = 2
    pca_factor: int = 2
    fwv_blocks: str = "mean"
    normalize_labels: bool = True
    seed: int = 0

    # translation and scoring
    t_z: Optional[int] = 10
    t_v: Optional[int] = 100
    alpha: float = 0.5
    normalize_videos: bool = True
    pipeline_order: str = "normalize-first"

    # localization and evaluation
    nms: float = 0.3
    detection_limit: int = 5
    thresholds: List[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    max_fpr: float = 1.0

    def validate(self):
        if self.encoder not in ("awv", "fwv"):
            raise InputError(f"encoder must be 'awv' or 'fwv', got {self.encoder!r}")
        if self.fwv_blocks not in ("mean", "mean+variance"):
            raise InputError(f"fwv_blocks must be 'mean' or 'mean+variance', got {self.fwv_blocks!r}")
        if self.k < 1 or self.pca_factor < 1:
            raise InputError("k and pca_factor must be >= 1")
        for name in ("t_z", "t_v"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise InputError(f"{name} must be >= 1 (or null to disable)")
        if not 0 < self.alpha <= 1:
            raise InputError("alpha must be in (0, 1]")
        if self.pipeline_order not in ("normalize-first", "sparsify-first"):
            raise InputError(f"unknown pipeline_order {self.pipeline_order!r}")
        if not 0 <= self.nms <= 1 or self.detection_limit < 1:
            raise InputError("nms must be in [0, 1] and detection_limit >= 1")
        return self

    def settings(self) -> dict:
        """All non-path fields; these determine the numerical result."""
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in PATH_FIELDS}

    def config_hash(self) -> str:
        blob = json.dumps(self.settings(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                values = json.load(f)
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise InputError(f"{path}:{e.lineno}: malformed config: {e.msg}") from None
        if not isinstance(values, dict):
            raise InputError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values).validate()


def config_as_json(config: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(config), indent=1, sort_keys=True) + "\n"
