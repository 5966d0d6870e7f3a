"""Ingest, validate, and filter grants, publications, and funding links.

Input formats:
  grants.jsonl        one object per line: grant_id, agency_name,
                      agency_description, title, abstract, fiscal_year,
                      subproject_id (optional)
  publications.jsonl  pub_id, title, abstract, year
  links.csv           header ``grant_id,pub_id``, UTF-8

CSV variants of the record files use the same column names with a header
row. Ingestion is single-threaded per file; the returned bundle is
immutable afterward and safe to share read-only.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Generic, NamedTuple, TypeVar

from .errors import EmptyCorpusError

_YEAR_MIN, _YEAR_MAX = 1900, 2100

# Degree caps applied by filter_corpus.
MAX_PUBLICATIONS_PER_GRANT = 10
MAX_GRANTS_PER_PUBLICATION = 3


@dataclass(frozen=True)
class GrantRecord:
    grant_id: str
    agency_name: str = ""
    agency_description: str = ""
    title: str = ""
    abstract: str = ""
    fiscal_year: int = _YEAR_MIN
    subproject_id: str = ""


@dataclass(frozen=True)
class PublicationRecord:
    pub_id: str
    title: str = ""
    abstract: str = ""
    year: int = _YEAR_MIN


class FundingLink(NamedTuple):
    grant_id: str
    pub_id: str


@dataclass(frozen=True)
class CorpusBundle:
    grants: dict[str, GrantRecord]
    publications: dict[str, PublicationRecord]
    links: frozenset[FundingLink]


T = TypeVar("T")


@dataclass
class IngestResult(Generic[T]):
    """Parsed records plus per-file bookkeeping.

    duplicates counts rows whose key collided with an earlier row (first
    occurrence wins); row_errors holds one message per malformed row;
    empty_dropped counts records discarded for having no text at all.
    """

    records: list[T] = field(default_factory=list)
    duplicates: int = 0
    row_errors: list[str] = field(default_factory=list)
    empty_dropped: int = 0


def _iter_rows(path: str | Path, fmt: str):
    """Yield (line_number, dict) rows from a JSONL or CSV file."""
    path = Path(path)
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                yield lineno, line
    elif fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                yield lineno, row
    else:
        raise ValueError(f"unknown format {fmt!r} (expected 'jsonl' or 'csv')")


def _parse_row(lineno: int, raw, result: IngestResult) -> dict | None:
    if isinstance(raw, dict):
        return raw
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        result.row_errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
        return None
    if not isinstance(obj, dict):
        result.row_errors.append(f"line {lineno}: expected a JSON object")
        return None
    return obj


def _parse_year(obj: dict, key: str, lineno: int, result: IngestResult) -> int | None:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        result.row_errors.append(f"line {lineno}: missing or invalid {key}")
        return None
    try:
        year = int(value)
    except ValueError:
        result.row_errors.append(f"line {lineno}: missing or invalid {key}")
        return None
    if not _YEAR_MIN <= year <= _YEAR_MAX:
        result.row_errors.append(f"line {lineno}: {key} {year} outside [{_YEAR_MIN}, {_YEAR_MAX}]")
        return None
    return year


def _text(obj: dict, key: str) -> str:
    value = obj.get(key, "")
    return value if isinstance(value, str) else str(value)


def ingest_grants(path: str | Path, fmt: str = "jsonl") -> IngestResult[GrantRecord]:
    """Parse grant records; duplicates collapse to the first occurrence."""
    result: IngestResult[GrantRecord] = IngestResult()
    seen: set[str] = set()
    for lineno, raw in _iter_rows(path, fmt):
        obj = _parse_row(lineno, raw, result)
        if obj is None:
            continue
        grant_id = _text(obj, "grant_id").strip()
        if not grant_id:
            result.row_errors.append(f"line {lineno}: empty grant_id")
            continue
        year = _parse_year(obj, "fiscal_year", lineno, result)
        if year is None:
            continue
        record = GrantRecord(
            grant_id=grant_id,
            agency_name=_text(obj, "agency_name"),
            agency_description=_text(obj, "agency_description"),
            title=_text(obj, "title"),
            abstract=_text(obj, "abstract"),
            fiscal_year=year,
            subproject_id=_text(obj, "subproject_id"),
        )
        if not record.title and not record.abstract:
            result.empty_dropped += 1
            continue
        if grant_id in seen:
            result.duplicates += 1
            continue
        seen.add(grant_id)
        result.records.append(record)
    if not result.records:
        raise EmptyCorpusError(f"no valid grant records in {path}")
    return result


def ingest_publications(path: str | Path, fmt: str = "jsonl") -> IngestResult[PublicationRecord]:
    """Parse publication records; same contract as ingest_grants."""
    result: IngestResult[PublicationRecord] = IngestResult()
    seen: set[str] = set()
    for lineno, raw in _iter_rows(path, fmt):
        obj = _parse_row(lineno, raw, result)
        if obj is None:
            continue
        pub_id = _text(obj, "pub_id").strip()
        if not pub_id:
            result.row_errors.append(f"line {lineno}: empty pub_id")
            continue
        year = _parse_year(obj, "year", lineno, result)
        if year is None:
            continue
        record = PublicationRecord(
            pub_id=pub_id,
            title=_text(obj, "title"),
            abstract=_text(obj, "abstract"),
            year=year,
        )
        if not record.title and not record.abstract:
            result.empty_dropped += 1
            continue
        if pub_id in seen:
            result.duplicates += 1
            continue
        seen.add(pub_id)
        result.records.append(record)
    if not result.records:
        raise EmptyCorpusError(f"no valid publication records in {path}")
    return result


def ingest_links(path: str | Path, fmt: str | None = None) -> IngestResult[FundingLink]:
    """Parse (grant_id, pub_id) pairs; duplicate pairs collapse silently.

    Format is inferred from the extension when not given (.csv vs .jsonl).
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    result: IngestResult[FundingLink] = IngestResult()
    seen: set[FundingLink] = set()
    for lineno, raw in _iter_rows(path, fmt):
        obj = _parse_row(lineno, raw, result)
        if obj is None:
            continue
        grant_id = _text(obj, "grant_id").strip()
        pub_id = _text(obj, "pub_id").strip()
        if not grant_id or not pub_id:
            result.row_errors.append(f"line {lineno}: empty grant_id or pub_id")
            continue
        link = FundingLink(grant_id, pub_id)
        if link in seen:
            result.duplicates += 1
            continue
        seen.add(link)
        result.records.append(link)
    if not result.records:
        raise EmptyCorpusError(f"no valid links in {path}")
    return result


def make_bundle(
    grants: list[GrantRecord],
    publications: list[PublicationRecord],
    links: list[FundingLink],
) -> CorpusBundle:
    return CorpusBundle(
        grants={g.grant_id: g for g in grants},
        publications={p.pub_id: p for p in publications},
        links=frozenset(links),
    )


def filter_corpus(bundle: CorpusBundle) -> CorpusBundle:
    """Apply the outlier and hygiene filters, iterating to a fixed point.

    Order per pass: drop sub-grants (non-empty subproject_id, once), then
    repeatedly (a) drop grants with more than 10 links, (b) drop
    publications with more than 3 links, (c) drop links referencing
    removed records, (d) drop records left with zero links — until nothing
    changes. Removing a grant can orphan a publication, hence the loop.
    """
    grants = {gid: g for gid, g in bundle.grants.items() if not g.subproject_id}
    publications = dict(bundle.publications)
    links = set(bundle.links)

    while True:
        grant_degree = Counter(l.grant_id for l in links)
        grants = {
            gid: g
            for gid, g in grants.items()
            if grant_degree[gid] <= MAX_PUBLICATIONS_PER_GRANT
        }
        pub_degree = Counter(l.pub_id for l in links)
        publications = {
            pid: p
            for pid, p in publications.items()
            if pub_degree[pid] <= MAX_GRANTS_PER_PUBLICATION
        }
        cleaned = {l for l in links if l.grant_id in grants and l.pub_id in publications}
        live_grants = {l.grant_id for l in cleaned}
        live_pubs = {l.pub_id for l in cleaned}
        new_grants = {gid: g for gid, g in grants.items() if gid in live_grants}
        new_pubs = {pid: p for pid, p in publications.items() if pid in live_pubs}
        changed = (
            len(new_grants) != len(grants)
            or len(new_pubs) != len(publications)
            or cleaned != links
        )
        grants, publications, links = new_grants, new_pubs, cleaned
        if not changed:
            break

    if not grants or not publications:
        raise EmptyCorpusError("filtering removed every record")
    return CorpusBundle(grants=grants, publications=publications, links=frozenset(links))


@dataclass(frozen=True)
class CorpusStats:
    n_grants: int
    n_publications: int
    n_links: int
    grant_degree_hist: dict[int, int]
    publication_degree_hist: dict[int, int]


def corpus_stats(bundle: CorpusBundle) -> CorpusStats:
    grant_degree = Counter(l.grant_id for l in bundle.links)
    pub_degree = Counter(l.pub_id for l in bundle.links)
    grant_hist = Counter(grant_degree.get(gid, 0) for gid in bundle.grants)
    pub_hist = Counter(pub_degree.get(pid, 0) for pid in bundle.publications)
    return CorpusStats(
        n_grants=len(bundle.grants),
        n_publications=len(bundle.publications),
        n_links=len(bundle.links),
        grant_degree_hist=dict(sorted(grant_hist.items())),
        publication_degree_hist=dict(sorted(pub_hist.items())),
    )


def save_bundle(bundle: CorpusBundle, directory: str | Path) -> None:
    """Write the bundle back out in the ingestion formats, sorted by key."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "grants.jsonl", "w", encoding="utf-8") as fh:
        for gid in sorted(bundle.grants):
            g = bundle.grants[gid]
            fh.write(json.dumps(g.__dict__, sort_keys=True) + "\n")
    with open(directory / "publications.jsonl", "w", encoding="utf-8") as fh:
        for pid in sorted(bundle.publications):
            p = bundle.publications[pid]
            fh.write(json.dumps(p.__dict__, sort_keys=True) + "\n")
    with open(directory / "links.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grant_id", "pub_id"])
        for link in sorted(bundle.links):
            writer.writerow(list(link))


def load_bundle(directory: str | Path) -> CorpusBundle:
    directory = Path(directory)
    grants = ingest_grants(directory / "grants.jsonl")
    publications = ingest_publications(directory / "publications.jsonl")
    links = ingest_links(directory / "links.csv")
    return make_bundle(grants.records, publications.records, links.records)
