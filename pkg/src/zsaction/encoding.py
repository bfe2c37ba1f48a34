"""Label encoders: average word vectors (AWV) and Fisher word vectors (FWV).

FWV pipeline for one label::

    words -> embedding -> PCA projection -> per-component Fisher gradients
          -> signed power (alpha=0.5) -> l2

Only the gradients w.r.t. the component means are kept by default; the
variance block is available with ``blocks="mean+variance"``.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from zsaction.embeddings import EmbeddingTable, LabelDescription
from zsaction.errors import DegenerateEncodingError, InputError, UnencodableLabelError
from zsaction.gmm import GmmModel, responsibilities

AWV = "awv"
FWV = "fwv"
MEAN_ONLY = "mean"
MEAN_VARIANCE = "mean+variance"


@dataclass(frozen=True, eq=False)
class PcaTransform:
    mean: np.ndarray
    projection: np.ndarray  # (output_dim, input_dim), orthonormal rows

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        proj = np.array(self.projection, dtype=np.float64)
        if proj.ndim != 2 or proj.shape[1] != mean.shape[0] or proj.shape[0] > proj.shape[1]:
            raise InputError("PCA projection must be (output_dim, input_dim) with output_dim <= input_dim")
        mean.setflags(write=False)
        proj.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "projection", proj)

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    @property
    def output_dim(self) -> int:
        return self.projection.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean) @ self.projection.T

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "mean": [float(v) for v in self.mean],
            "projection": [[float(v) for v in row] for row in self.projection],
        }

    @classmethod
    def from_dict(cls, d):
        pca = cls(d["mean"], d["projection"])
        if (pca.input_dim, pca.output_dim) != (d["input_dim"], d["output_dim"]):
            raise InputError("PCA dims do not match projection shape")
        return pca


def fit_pca(data, output_dim: int) -> PcaTransform:
    """Principal axes of ``data`` ordered by decreasing variance.

    Each axis is signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("PCA data must be a 2-D array")
    n, d = X.shape
    if not 1 <= output_dim <= d:
        raise InputError(f"output_dim must be in [1, {d}], got {output_dim}")
    if n <= output_dim:
        raise InputError(f"PCA to {output_dim} dims needs more than {output_dim} points, got {n}")
    mean = X.mean(axis=0)
    C = X - mean
    cov = (C.T @ C) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:output_dim]
    axes = evecs[:, order].T.copy()
    for row in axes:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaTransform(mean, axes)


@dataclass(frozen=True, eq=False)
class SemanticVector:
    values: np.ndarray
    encoder: str


def _word_matrix(label: LabelDescription, table: EmbeddingTable) -> np.ndarray:
    if not label.encodable:
        raise UnencodableLabelError(label.raw)
    return np.stack([table.get(w) for w in label.resolved])


def _l2(v, label, scale):
    norm = float(np.linalg.norm(v))
    if not norm > 1e-12 * scale:
        raise DegenerateEncodingError(f"degenerate zero encoding for label {label!r}")
    return v / norm


def encode_awv(label: LabelDescription, table: EmbeddingTable, normalize: bool = True) -> SemanticVector:
    W = _word_matrix(label, table)
    v = W.mean(axis=0)
    scale = float(np.linalg.norm(W, axis=1).max())
    if normalize:
        v = _l2(v, label.raw, scale)
    elif not np.any(v):
        raise DegenerateEncodingError(f"degenerate zero encoding for label {label!r}")
    return SemanticVector(v, AWV)


def fisher_blocks(X, model: GmmModel, blocks: str = MEAN_ONLY) -> np.ndarray:
    """Unnormalized Fisher vector of the word set ``X`` (n_words, model.dim).

    Per component k, in component order::

        G_mu_k    = 1/sqrt(pi_k)   * sum_w gamma_w(k) (x_w - mu_k) / sigma_k
        G_sigma_k = 1/sqrt(2 pi_k) * sum_w gamma_w(k) ((x_w - mu_k)^2 / sigma_k^2 - 1)
    """
    if blocks not in (MEAN_ONLY, MEAN_VARIANCE):
        raise InputError(f"unknown Fisher block choice {blocks!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    gamma = responsibilities(model, X)
    parts = []
    for k in range(model.k):
        z = (X - model.means[k]) / model.stddevs[k]
        g = gamma[:, k][:, None]
        parts.append((g * z).sum(axis=0) / np.sqrt(model.weights[k]))
        if blocks == MEAN_VARIANCE:
            parts.append((g * (z ** 2 - 1.0)).sum(axis=0) / np.sqrt(2.0 * model.weights[k]))
    return np.concatenate(parts)


def encode_fwv(
    label: LabelDescription,
    table: EmbeddingTable,
    pca: Optional[PcaTransform],
    model: GmmModel,
    blocks: str = MEAN_ONLY,
    normalize: bool = True,
    power: float = 0.5,
) -> SemanticVector:
    W = _word_matrix(label, table)
    if pca is not None:
        if pca.input_dim != table.dim:
            raise InputError("PCA input dimension does not match the embedding dimension")
        W = pca.transform(W)
    if model.dim != W.shape[1]:
        raise InputError(f"mixture dimension {model.dim} does not match projected dimension {W.shape[1]}")
    v = fisher_blocks(W, model, blocks)
    if not np.linalg.norm(v) > 1e-12 * W.shape[0]:
        raise DegenerateEncodingError(f"degenerate encoding for label {label.raw!r}")
    if normalize:
        v = np.sign(v) * np.abs(v) ** power
        v = _l2(v, label.raw, 1.0)
    return SemanticVector(v, FWV)


@dataclass(frozen=True)
class EncoderConfig:
    encoder: str = FWV
    normalize: bool = True
    blocks: str = MEAN_ONLY
    power: float = 0.5
    pca: Optional[PcaTransform] = None
    gmm: Optional[GmmModel] = None

    def __post_init__(self):
        if self.encoder not in (AWV, FWV):
            raise InputError(f"unknown encoder {self.encoder!r}")
        if self.encoder == FWV and self.gmm is None:
            raise InputError("FWV encoding needs a fitted mixture model")

    @property
    def output_dim(self) -> Optional[int]:
        if self.encoder == FWV:
            per = 2 if self.blocks == MEAN_VARIANCE else 1
            return per * self.gmm.k * self.gmm.dim
        return self.pca.input_dim if self.pca is not None else None


def encode(label: LabelDescription, table: EmbeddingTable, config: EncoderConfig) -> SemanticVector:
    if config.encoder == AWV:
        return encode_awv(label, table, normalize=config.normalize)
    return encode_fwv(label, table, config.pca, config.gmm, config.blocks, config.normalize, config.power)


def encode_all(labels: Sequence[LabelDescription], table: EmbeddingTable, config: EncoderConfig) -> np.ndarray:
    """Encode every label; row i of the result is the encoding of ``labels[i]``."""
    rows: List[np.ndarray] = []
    for i, label in enumerate(labels):
        if not label.encodable:
            raise UnencodableLabelError(label.raw, i)
        rows.append(encode(label, table, config).values)
    if not rows:
        width = config.output_dim if config.output_dim is not None else table.dim
        return np.zeros((0, width))
    return np.stack(rows)


def object_word_matrix(labels: Sequence[LabelDescription], table: EmbeddingTable) -> np.ndarray:
    """Vectors of every resolved token across ``labels``, duplicates kept."""
    words = [w for label in labels for w in label.resolved]
    if not words:
        raise InputError("no in-vocabulary tokens among the object labels")
    return np.stack([table.get(w) for w in words])
