"""Statistical relevance features for one publication/grant pair.

All 31 features are computed against a single grant-description view and
the Vocabulary built over that view. Conventions that keep every value
finite: statistics over an empty term set are 0, and any division by a
zero grant length yields 0.

Logs are natural throughout. idf uses the smoothed form
ln(|D| / (df + 1)), with df = 0 for terms never seen in the collection;
BM25 reuses the same idf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .textproc import TermBag, Vocabulary

NUM_STAT_FEATURES = 31

# Probability floor for terms absent from the whole collection.
_UNSEEN_PROB = 1e-10


@dataclass(frozen=True)
class SmoothingMethod:
    """Language-model smoothing scheme with its single parameter."""

    kind: str  # "jelinek_mercer" | "dirichlet" | "absolute_discount"
    param: float

    @classmethod
    def jelinek_mercer(cls, lam: float = 0.1) -> "SmoothingMethod":
        return cls("jelinek_mercer", lam)

    @classmethod
    def dirichlet(cls, mu: float = 2000.0) -> "SmoothingMethod":
        return cls("dirichlet", mu)

    @classmethod
    def absolute_discount(cls, delta: float = 0.7) -> "SmoothingMethod":
        return cls("absolute_discount", delta)


def idf(term: str, vocab: Vocabulary) -> float:
    """ln(|D| / (df + 1)); df = 0 for unseen terms."""
    return math.log(vocab.doc_count / (vocab.df.get(term, 0) + 1))


def bm25_score(
    pub: TermBag,
    grant: TermBag,
    vocab: Vocabulary,
    k1: float = 1.5,
    b: float = 0.75,
) -> float:
    """Okapi-style score over the publication's unique terms.

    Each term contributes idf * c * (k1+1) / (c + k1*(1 - b + b*|d|/avgdoclen))
    where c is the term's count in the grant; zero-count terms contribute 0.
    """
    score = 0.0
    for term in pub.counts:
        c = grant.counts.get(term, 0)
        if c == 0:
            continue
        ratio = grant.length / vocab.avg_doc_len if vocab.avg_doc_len > 0 else 0.0
        score += idf(term, vocab) * c * (k1 + 1) / (c + k1 * (1 - b + b * ratio))
    return score


def _smoothed_prob(c: int, grant: TermBag, p_corpus: float, method: SmoothingMethod) -> float:
    dlen = grant.length
    if method.kind == "jelinek_mercer":
        lam = method.param
        return (1 - lam) * c / dlen + lam * p_corpus
    if method.kind == "dirichlet":
        mu = method.param
        return (c + mu * p_corpus) / (dlen + mu)
    if method.kind == "absolute_discount":
        delta = method.param
        return (max(c - delta, 0.0) + delta * grant.unique_count * p_corpus) / dlen
    raise ValueError(f"unknown smoothing method {method.kind!r}")


def lmir_score(
    pub: TermBag,
    grant: TermBag,
    vocab: Vocabulary,
    method: SmoothingMethod,
) -> float:
    """Query log-likelihood under the grant's smoothed language model.

    Sum over publication terms of count(term in pub) * ln p(term | grant).
    The collection model is maximum likelihood over all view tokens, with
    unseen terms floored at 1e-10. A zero-length grant neutralizes the
    feature (returns 0) instead of erroring.
    """
    if grant.length == 0:
        return 0.0
    score = 0.0
    for term, q_count in pub.counts.items():
        cf = vocab.cf.get(term, 0)
        if cf > 0 and vocab.total_tokens > 0:
            p_corpus = cf / vocab.total_tokens
        else:
            p_corpus = _UNSEEN_PROB
        p = _smoothed_prob(grant.counts.get(term, 0), grant, p_corpus, method)
        # delta = 0 can produce an exact zero; keep the log finite.
        score += q_count * math.log(max(p, 1e-300))
    return score


def extract_stat_features(
    pub: TermBag,
    grant: TermBag,
    vocab: Vocabulary,
    smoothing: tuple[SmoothingMethod, SmoothingMethod, SmoothingMethod] | None = None,
) -> np.ndarray:
    """Return the 31 statistical features as a float vector.

    Slot layout (0-based index = feature number - 1):
       0  sum of grant counts over publication terms
       1  sum of ln(grant count + 1)
       2  slot 0 divided by grant length
       3  grant length
       4-8   sum/min/max/mean/var of the publication term frequencies
       9-13  the same statistics divided by grant length
      14  sum of ln(|D| / (cf + 1) + 1)
      15  sum of idf
      16  sum of ln(idf + 1)
      17-21 sum/min/max/mean/var of count-times-idf (counts from the grant)
      22-26 the same with counts normalized by grant length
      27  BM25
      28-30 LMIR absolute-discount / Dirichlet / Jelinek-Mercer

    Variances are population variances.
    """
    if smoothing is None:
        smoothing = (
            SmoothingMethod.absolute_discount(),
            SmoothingMethod.dirichlet(),
            SmoothingMethod.jelinek_mercer(),
        )
    out = np.zeros(NUM_STAT_FEATURES, dtype=float)
    dlen = grant.length
    out[3] = float(dlen)
    if pub.unique_count == 0:
        return out

    terms = list(pub.counts)
    c_grant = np.array([grant.counts.get(t, 0) for t in terms], dtype=float)
    c_pub = np.array([pub.counts[t] for t in terms], dtype=float)
    idfs = np.array([idf(t, vocab) for t in terms])
    cfs = np.array([vocab.cf.get(t, 0) for t in terms], dtype=float)

    out[0] = c_grant.sum()
    out[1] = np.log1p(c_grant).sum()
    out[2] = out[0] / dlen if dlen else 0.0

    out[4] = c_pub.sum()
    out[5] = c_pub.min()
    out[6] = c_pub.max()
    out[7] = c_pub.mean()
    out[8] = c_pub.var()
    if dlen:
        out[9:14] = out[4:9] / dlen

    out[14] = np.log(vocab.doc_count / (cfs + 1) + 1).sum()
    out[15] = idfs.sum()
    # idf >= ln(|D| / (|D| + 1)) > -1, so the argument stays positive.
    out[16] = np.log1p(idfs).sum()

    c_idf = c_grant * idfs
    out[17] = c_idf.sum()
    out[18] = c_idf.min()
    out[19] = c_idf.max()
    out[20] = c_idf.mean()
    out[21] = c_idf.var()
    if dlen:
        weighted = (c_grant / dlen) * idfs
        out[22] = weighted.sum()
        out[23] = weighted.min()
        out[24] = weighted.max()
        out[25] = weighted.mean()
        out[26] = weighted.var()

    out[27] = bm25_score(pub, grant, vocab)
    out[28] = lmir_score(pub, grant, vocab, smoothing[0])
    out[29] = lmir_score(pub, grant, vocab, smoothing[1])
    out[30] = lmir_score(pub, grant, vocab, smoothing[2])
    return out
