"""Tokenization, corpus statistics, tf-idf vectors, and cosine similarity.

Everything here is pure and operates on immutable values, so the objects
can be shared freely across feature-extraction workers.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyCorpusError

# Runs of unicode alphanumerics (underscore excluded).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_MIN_TOKEN_LEN = 2


def tokenize(text: str, stopwords: Iterable[str] | None = None) -> list[str]:
    """Lowercase `text` and split on non-alphanumeric characters.

    Tokens shorter than two characters are dropped. No stemming is applied;
    stopword removal happens only when a `stopwords` collection is given.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    tokens = [t for t in tokens if len(t) >= _MIN_TOKEN_LEN]
    if stopwords:
        stop = set(stopwords)
        tokens = [t for t in tokens if t not in stop]
    return tokens


def load_stopwords(path: str) -> frozenset[str]:
    """Read a stopword list, one token per line; blank lines are ignored."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


@dataclass(frozen=True)
class TermBag:
    """Multiset of terms for one document.

    `length` is the total token count, `unique_count` the number of
    distinct terms; both are derived from `counts` at construction.
    """

    counts: Mapping[str, int]
    length: int
    unique_count: int

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "TermBag":
        counts = dict(Counter(tokens))
        return cls(counts=counts, length=len(tokens), unique_count=len(counts))

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "TermBag":
        counts = {t: int(c) for t, c in counts.items() if c > 0}
        return cls(
            counts=counts,
            length=sum(counts.values()),
            unique_count=len(counts),
        )

    @classmethod
    def from_text(cls, text: str, stopwords: Iterable[str] | None = None) -> "TermBag":
        return cls.from_tokens(tokenize(text, stopwords))


@dataclass(frozen=True)
class Vocabulary:
    """Collection statistics over one view of the grant descriptions.

    df: number of documents containing each term.
    cf: total occurrences of each term across the collection.
    """

    doc_count: int
    df: Mapping[str, int]
    cf: Mapping[str, int]
    total_tokens: int
    avg_doc_len: float


def build_vocabulary(docs: Sequence[TermBag]) -> Vocabulary:
    """Compute df/cf/average length exactly over the given documents."""
    if not docs:
        raise EmptyCorpusError("cannot build a vocabulary from zero documents")
    df: Counter[str] = Counter()
    cf: Counter[str] = Counter()
    total_tokens = 0
    for bag in docs:
        total_tokens += bag.length
        for term, count in bag.counts.items():
            df[term] += 1
            cf[term] += count
    n = len(docs)
    return Vocabulary(
        doc_count=n,
        df=dict(df),
        cf=dict(cf),
        total_tokens=total_tokens,
        avg_doc_len=total_tokens / n,
    )


@dataclass(frozen=True)
class SparseVector:
    """Term-weighted vector; zero-weight entries are never stored."""

    entries: Mapping[str, float] = field(default_factory=dict)

    def dot(self, other: "SparseVector") -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b[t] for t, w in a.items() if t in b)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.entries.values()))


def tfidf_vector(bag: TermBag, vocab: Vocabulary) -> SparseVector:
    """weight(t) = c(t, doc) * ln(|D| / (df(t) + 1)); unseen terms use df = 0."""
    entries = {}
    for term, count in bag.counts.items():
        weight = count * math.log(vocab.doc_count / (vocab.df.get(term, 0) + 1))
        if weight != 0.0:
            entries[term] = weight
    return SparseVector(entries)


def cosine_similarity(a, b) -> float:
    """Cosine of two SparseVectors or two dense vectors.

    Returns 0.0 when either vector has zero norm, so empty documents are
    maximally dissimilar rather than an error.
    """
    if isinstance(a, SparseVector) and isinstance(b, SparseVector):
        norm_a, norm_b = a.norm(), b.norm()
        if norm_a == 0.0 or norm_b == 0.0:
            return 0.0
        return a.dot(b) / (norm_a * norm_b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(a @ b) / (norm_a * norm_b)
