"""Word-vector lookup table and label tokenization.

Vectors are read from the common word2vec text format::

    <vocab_size> <dim>
    <token> <v1> ... <v_dim>
    ...

Tokens are case-folded to lowercase on load and on lookup.
"""
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from zsaction.errors import EmbeddingLoadError, InputError

_SPLIT = re.compile(r"[\s_\-,]+")


class EmbeddingTable:
    """Immutable mapping from lowercase token to a ``dim``-vector."""

    def __init__(self, tokens: Sequence[str], vectors):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise InputError("vectors must be a (vocab_size, dim) array matching tokens")
        if vectors.shape[1] < 1:
            raise InputError("embedding dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            raise InputError("embedding vectors must be finite")
        index: Dict[str, int] = {}
        for i, tok in enumerate(tokens):
            key = tok.lower()
            if key in index:
                raise InputError(f"duplicate token {key!r}")
            index[key] = i
        vectors.setflags(write=False)
        self._tokens = tuple(t.lower() for t in tokens)
        self._vectors = vectors
        self._index = index

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def tokens(self):
        return self._tokens

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token.lower() in self._index

    def get(self, token: str) -> Optional[np.ndarray]:
        i = self._index.get(token.lower())
        return None if i is None else self._vectors[i]

    def save(self, path):
        save_embeddings(self, path)


def lookup(table: EmbeddingTable, token: str) -> Optional[np.ndarray]:
    """Return the stored vector for ``token`` or None if it is not in the table."""
    return table.get(token)


def load_embeddings(source) -> EmbeddingTable:
    path = Path(source)
    if not path.is_file():
        raise EmbeddingLoadError(f"embedding file not found: {path}")
    tokens: List[str] = []
    rows: List[List[float]] = []
    seen: Dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise EmbeddingLoadError("header must be '<vocab_size> <dim>'", 1)
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingLoadError("header must be '<vocab_size> <dim>'", 1) from None
        if vocab_size < 0 or dim < 1:
            raise EmbeddingLoadError("header sizes out of range", 1)
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            token, values = parts[0].lower(), parts[1:]
            if len(values) != dim:
                raise EmbeddingLoadError(f"expected {dim} values for {token!r}, got {len(values)}", lineno)
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise EmbeddingLoadError(f"non-numeric value in row for {token!r}", lineno) from None
            if not all(math.isfinite(v) for v in vec):
                raise EmbeddingLoadError(f"non-finite value in row for {token!r}", lineno)
            if token in seen:
                raise EmbeddingLoadError(f"duplicate token {token!r} (first on line {seen[token]})", lineno)
            seen[token] = lineno
            tokens.append(token)
            rows.append(vec)
    if len(tokens) != vocab_size:
        raise EmbeddingLoadError(f"header declares {vocab_size} rows, found {len(tokens)}", 1)
    return EmbeddingTable(tokens, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


def save_embeddings(table: EmbeddingTable, path):
    # repr() is the shortest string that round-trips a float64 exactly
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            f.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True)
class LabelDescription:
    raw: str
    tokens: List[str]
    resolved: List[str] = field(default_factory=list)

    @property
    def encodable(self) -> bool:
        return len(self.resolved) >= 1


def tokenize_label(raw: str, table: Optional[EmbeddingTable] = None) -> LabelDescription:
    """Split a class name into lowercase word tokens.

    Words are separated by whitespace, underscores, hyphens and commas.
    When ``table`` is given, ``resolved`` keeps the in-vocabulary tokens in
    their original order; out-of-vocabulary tokens are dropped.
    """
    if raw is None or not raw.strip():
        raise InputError("label must be a non-empty string")
    tokens = [t for t in _SPLIT.split(raw.lower()) if t]
    if not tokens:
        raise InputError(f"label {raw!r} contains no word tokens")
    resolved = [t for t in tokens if table is not None and t in table]
    return LabelDescription(raw=raw, tokens=tokens, resolved=resolved)


def read_labels(path) -> List[str]:
    """One label per line; blank lines and lines starting with '#' are skipped."""
    labels = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                labels.append(line)
    return labels
