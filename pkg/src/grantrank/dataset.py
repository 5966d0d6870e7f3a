"""Training-corpus construction for the ranker.

Each publication/funding-grant link becomes one 5-candidate ranking list:
rank 1 is the grant that actually funded the publication, rank 2 the
nearest neighbor in tf-idf cosine space over the combined grant view, and
ranks 3-5 the grants at the 25th/50th/75th distance percentiles of the
remaining pool. Gains are 5 - rank, so exactly one candidate per list
carries gain 4.

Features are assembled per the fixed 129-name schema: 31 statistical
features for each of the four grant-description views, one semantic
similarity per view, then the publication-minus-grant year difference.
"""
from __future__ import annotations

import json
import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusBundle, GrantRecord, PublicationRecord
from .errors import DatasetSplitError, InsufficientCandidatesError
from .semfeat import EmbeddingTable, semantic_similarity
from .statfeat import NUM_STAT_FEATURES, extract_stat_features
from .textproc import (
    SparseVector,
    TermBag,
    Vocabulary,
    build_vocabulary,
    tfidf_vector,
    tokenize,
)

logger = logging.getLogger(__name__)

NUM_VIEWS = 4


def feature_schema() -> list[str]:
    """The fixed 129-name feature order; model files depend on it."""
    names = [
        f"APP_{v}/Feature_{i}"
        for v in range(1, NUM_VIEWS + 1)
        for i in range(1, NUM_STAT_FEATURES + 1)
    ]
    names += [f"APP_{v}/semantic" for v in range(1, NUM_VIEWS + 1)]
    names.append("year_diff")
    return names


FEATURE_NAMES: tuple[str, ...] = tuple(feature_schema())
NUM_FEATURES = len(FEATURE_NAMES)  # 129


@dataclass(frozen=True)
class GrantViews:
    """The four grant-description texts scored against a publication."""

    agency: str
    title: str
    abstract: str
    combined: str

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.agency, self.title, self.abstract, self.combined)


def grant_views(grant: GrantRecord) -> GrantViews:
    agency = " ".join(p for p in (grant.agency_name, grant.agency_description) if p)
    combined = " ".join((agency, grant.title, grant.abstract))
    return GrantViews(
        agency=agency,
        title=grant.title,
        abstract=grant.abstract,
        combined=combined,
    )


def publication_description(pub: PublicationRecord) -> str:
    """Title and abstract joined by a single space; empty parts dropped."""
    return " ".join(p for p in (pub.title, pub.abstract) if p)


@dataclass(frozen=True)
class RankedCandidate:
    grant_id: str
    rank_label: int  # 1..5

    @property
    def gain(self) -> int:
        return 5 - self.rank_label


@dataclass(frozen=True)
class RankingList:
    pub_id: str
    candidates: tuple[RankedCandidate, ...]
    features: np.ndarray | None = None  # (5, NUM_FEATURES), rows aligned


class GrantIndex:
    """tf-idf vectors over the combined grant view, with cached norms."""

    def __init__(self, vocab: Vocabulary, bags: dict[str, TermBag]):
        self.vocab = vocab
        self.vectors: dict[str, SparseVector] = {
            gid: tfidf_vector(bag, vocab) for gid, bag in bags.items()
        }
        self._norms = {gid: vec.norm() for gid, vec in self.vectors.items()}

    def similarities(self, pub_bag: TermBag) -> dict[str, float]:
        """Cosine of the publication against every indexed grant."""
        pub_vec = tfidf_vector(pub_bag, self.vocab)
        pub_norm = pub_vec.norm()
        sims = {}
        for gid, vec in self.vectors.items():
            denom = pub_norm * self._norms[gid]
            sims[gid] = pub_vec.dot(vec) / denom if denom > 0 else 0.0
        return sims

    def retrieve(self, pub_bag: TermBag, depth: int) -> list[tuple[str, float]]:
        """Top `depth` grants by similarity; ties broken by grant id."""
        sims = self.similarities(pub_bag)
        ordered = sorted(sims.items(), key=lambda kv: (-kv[1], kv[0]))
        return ordered[:depth]


def build_grant_index(
    bundle: CorpusBundle, stopwords: Iterable[str] | None = None
) -> GrantIndex:
    bags = {
        gid: TermBag.from_text(grant_views(bundle.grants[gid]).combined, stopwords)
        for gid in sorted(bundle.grants)
    }
    vocab = build_vocabulary([bags[gid] for gid in sorted(bags)])
    return GrantIndex(vocab, bags)


def build_candidate_list(
    pub: PublicationRecord,
    true_grant_id: str,
    bundle: CorpusBundle,
    index: GrantIndex,
    stopwords: Iterable[str] | None = None,
    linked_grants: set[str] | None = None,
) -> RankingList:
    """Label the 5 candidates for one publication (no features yet).

    The pool excludes every grant actually linked to the publication, so
    negatives are never accidentally positive. Rank 2 is the pool grant
    nearest in distance (1 - cosine); ranks 3/4/5 sit at ceil(0.25N),
    ceil(0.50N), ceil(0.75N) of the remaining pool sorted by ascending
    distance (1-based). All ties break by ascending grant_id.
    """
    if linked_grants is None:
        linked_grants = {l.grant_id for l in bundle.links if l.pub_id == pub.pub_id}
    pool = [gid for gid in index.vectors if gid not in linked_grants]
    if len(pool) < 4:
        raise InsufficientCandidatesError(
            f"publication {pub.pub_id}: pool of {len(pool)} grants after "
            "exclusions, need at least 4"
        )
    pub_bag = TermBag.from_text(publication_description(pub), stopwords)
    sims = index.similarities(pub_bag)
    ordered = sorted(pool, key=lambda gid: (1.0 - sims[gid], gid))
    nearest, rest = ordered[0], ordered[1:]
    n = len(rest)
    quantiles = [rest[math.ceil(q * n) - 1] for q in (0.25, 0.50, 0.75)]
    candidates = (
        RankedCandidate(true_grant_id, 1),
        RankedCandidate(nearest, 2),
        RankedCandidate(quantiles[0], 3),
        RankedCandidate(quantiles[1], 4),
        RankedCandidate(quantiles[2], 5),
    )
    return RankingList(pub_id=pub.pub_id, candidates=candidates)


def _assemble(
    pub_tokens: Sequence[str],
    pub_bag: TermBag,
    view_tokens: Sequence[Sequence[str]],
    view_bags: Sequence[TermBag],
    vocabs: Sequence[Vocabulary],
    embeddings: EmbeddingTable,
    year_diff: float,
) -> np.ndarray:
    out = np.empty(NUM_FEATURES)
    for v in range(NUM_VIEWS):
        start = v * NUM_STAT_FEATURES
        out[start : start + NUM_STAT_FEATURES] = extract_stat_features(
            pub_bag, view_bags[v], vocabs[v]
        )
        out[NUM_VIEWS * NUM_STAT_FEATURES + v] = semantic_similarity(
            pub_tokens, view_tokens[v], embeddings
        )
    out[-1] = year_diff
    return out


def assemble_feature_vector(
    pub: PublicationRecord,
    grant: GrantRecord,
    vocabs: Sequence[Vocabulary],
    embeddings: EmbeddingTable,
    stopwords: Iterable[str] | None = None,
) -> np.ndarray:
    """Full 129-slot vector for one publication/grant pair."""
    pub_tokens = tokenize(publication_description(pub), stopwords)
    pub_bag = TermBag.from_tokens(pub_tokens)
    view_tokens = [tokenize(v, stopwords) for v in grant_views(grant).as_tuple()]
    view_bags = [TermBag.from_tokens(t) for t in view_tokens]
    return _assemble(
        pub_tokens,
        pub_bag,
        view_tokens,
        view_bags,
        vocabs,
        embeddings,
        float(pub.year - grant.fiscal_year),
    )


class FeatureAssembler:
    """Caches per-view grant bags and vocabularies for repeated extraction."""

    def __init__(
        self,
        bundle: CorpusBundle,
        embeddings: EmbeddingTable,
        stopwords: Iterable[str] | None = None,
    ):
        self.bundle = bundle
        self.embeddings = embeddings
        self.stopwords = frozenset(stopwords) if stopwords else None
        gids = sorted(bundle.grants)
        self._view_tokens: dict[str, list[list[str]]] = {}
        self._view_bags: dict[str, list[TermBag]] = {}
        for gid in gids:
            tokens = [
                tokenize(v, self.stopwords)
                for v in grant_views(bundle.grants[gid]).as_tuple()
            ]
            self._view_tokens[gid] = tokens
            self._view_bags[gid] = [TermBag.from_tokens(t) for t in tokens]
        self.vocabs: tuple[Vocabulary, ...] = tuple(
            build_vocabulary([self._view_bags[gid][v] for gid in gids])
            for v in range(NUM_VIEWS)
        )
        self._pub_tokens: dict[str, list[str]] = {}

    def _pub(self, pub: PublicationRecord) -> tuple[list[str], TermBag]:
        tokens = self._pub_tokens.get(pub.pub_id)
        if tokens is None:
            tokens = tokenize(publication_description(pub), self.stopwords)
            self._pub_tokens[pub.pub_id] = tokens
        return tokens, TermBag.from_tokens(tokens)

    def features(self, pub: PublicationRecord, grant_id: str) -> np.ndarray:
        grant = self.bundle.grants[grant_id]
        pub_tokens, pub_bag = self._pub(pub)
        return _assemble(
            pub_tokens,
            pub_bag,
            self._view_tokens[grant_id],
            self._view_bags[grant_id],
            self.vocabs,
            self.embeddings,
            float(pub.year - grant.fiscal_year),
        )

    def combined_view_index(self) -> GrantIndex:
        """GrantIndex sharing this assembler's combined-view vocabulary."""
        bags = {gid: self._view_bags[gid][NUM_VIEWS - 1] for gid in self._view_bags}
        return GrantIndex(self.vocabs[NUM_VIEWS - 1], bags)


@dataclass
class DatasetBuildResult:
    lists: list[RankingList]
    skipped: int
    seed: int


def build_dataset(
    bundle: CorpusBundle,
    embeddings: EmbeddingTable,
    seed: int = 0,
    stopwords: Iterable[str] | None = None,
) -> DatasetBuildResult:
    """One RankingList per funding link, in canonical (pub_id, grant_id) order.

    Publications whose candidate pool is too small are skipped and counted.
    Output is deterministic for fixed inputs and seed.
    """
    assembler = FeatureAssembler(bundle, embeddings, stopwords)
    index = assembler.combined_view_index()
    linked_by_pub: dict[str, set[str]] = defaultdict(set)
    for link in bundle.links:
        linked_by_pub[link.pub_id].add(link.grant_id)

    lists: list[RankingList] = []
    skipped = 0
    for link in sorted(bundle.links, key=lambda l: (l.pub_id, l.grant_id)):
        pub = bundle.publications[link.pub_id]
        try:
            rlist = build_candidate_list(
                pub,
                link.grant_id,
                bundle,
                index,
                stopwords,
                linked_grants=linked_by_pub[link.pub_id],
            )
        except InsufficientCandidatesError as exc:
            logger.warning("skipping list: %s", exc)
            skipped += 1
            continue
        rows = np.vstack([assembler.features(pub, c.grant_id) for c in rlist.candidates])
        lists.append(replace(rlist, features=rows))
    if skipped:
        logger.warning("skipped %d publication/grant lists", skipped)
    return DatasetBuildResult(lists=lists, skipped=skipped, seed=seed)


def split_dataset(
    lists: Sequence[RankingList], ratio: float = 0.8, seed: int = 0
) -> tuple[list[RankingList], list[RankingList]]:
    """Publication-level split: all lists of one publication stay together."""
    if not 0.0 < ratio < 1.0:
        raise DatasetSplitError(f"split ratio must be in (0, 1), got {ratio}")
    pubs = sorted({rl.pub_id for rl in lists})
    if len(pubs) < 2:
        raise DatasetSplitError("need at least 2 publications to split")
    rng = random.Random(seed)
    rng.shuffle(pubs)
    n_train = min(max(int(ratio * len(pubs)), 1), len(pubs) - 1)
    train_pubs = set(pubs[:n_train])
    train = [rl for rl in lists if rl.pub_id in train_pubs]
    validation = [rl for rl in lists if rl.pub_id not in train_pubs]
    return train, validation


def save_ranking_lists(lists: Iterable[RankingList], path: str | Path) -> None:
    """One JSON object per line: pub_id, candidates [{grant_id, gain}], features."""
    with open(path, "w", encoding="utf-8") as fh:
        for rl in lists:
            obj = {
                "pub_id": rl.pub_id,
                "candidates": [
                    {"grant_id": c.grant_id, "gain": c.gain} for c in rl.candidates
                ],
                "features": rl.features.tolist() if rl.features is not None else None,
            }
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def load_ranking_lists(path: str | Path) -> list[RankingList]:
    lists = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            candidates = tuple(
                RankedCandidate(c["grant_id"], 5 - int(c["gain"]))
                for c in obj["candidates"]
            )
            features = (
                np.array(obj["features"], dtype=float)
                if obj.get("features") is not None
                else None
            )
            lists.append(RankingList(obj["pub_id"], candidates, features))
    return lists


def save_feature_schema(path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"feature_names": list(FEATURE_NAMES)}, fh, indent=2)
        fh.write("\n")


def load_feature_schema(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return list(json.load(fh)["feature_names"])
