"""Pretrained word vectors, mean-pooled document embeddings, and the
semantic cosine-similarity feature.

The vector file is the common text convention: an optional "count dim"
header line, then one token followed by `dim` space-separated reals per
line. Out-of-vocabulary tokens are skipped when embedding.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmbeddingFormatError
from .textproc import cosine_similarity


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class DocVector:
    """Mean of the known token vectors; zero vector when nothing is covered."""

    values: np.ndarray
    covered: int
    total: int


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Parse a word-vector text file; dimensionality must be consistent."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0])
                    dim = int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"line {lineno}: no vector values")
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} values, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingFormatError(f"line {lineno}: non-numeric vector value")
            if token not in vectors:  # first occurrence wins
                vectors[token] = vec
    if dim is None or not vectors:
        raise EmbeddingFormatError(f"no vectors found in {path}")
    return EmbeddingTable(dim=dim, vectors=vectors)


def embed_document(tokens: Sequence[str], table: EmbeddingTable) -> DocVector:
    """Component-wise mean over known tokens, counted with multiplicity."""
    acc = np.zeros(table.dim)
    covered = 0
    for token in tokens:
        vec = table.vectors.get(token)
        if vec is not None:
            acc += vec
            covered += 1
    if covered:
        acc /= covered
    return DocVector(values=acc, covered=covered, total=len(tokens))


def semantic_similarity(
    pub_tokens: Sequence[str],
    grant_tokens: Sequence[str],
    table: EmbeddingTable,
) -> float:
    """Cosine between the two mean-pooled documents (0 when either is empty)."""
    pub_vec = embed_document(pub_tokens, table)
    grant_vec = embed_document(grant_tokens, table)
    return cosine_similarity(pub_vec.values, grant_vec.values)
