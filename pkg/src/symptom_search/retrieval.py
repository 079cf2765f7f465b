"""Symptom-level retrieval and TREC run files.

A symptom's ranking is built from per-query exact top-k searches whose
candidate lists are merged by keeping, for every doc_id, the maximum
score over the symptom's queries.  The merged list is ordered by score
descending with ties broken by ascending doc_id, capped, and ranked
from 1.  Run files use the TREC line format

    symptom_index Q0 doc_id rank score run_tag

with scores printed to six decimals, sorted by symptom then rank.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .errors import DataFormatError
from .questionnaire import SYMPTOM_COUNT, Questionnaire
from .store import EmbeddingStore, top_k
from .synthgen import ORIGIN_GENERATED, ORIGIN_ORIGINAL, QueryText

ORIGIN_FILTERS = (ORIGIN_ORIGINAL, ORIGIN_GENERATED, "all")

DEFAULT_PER_QUERY_K = 50
DEFAULT_SYMPTOM_CAP = 1000

ENCODER_SEMANTIC_SEARCH = "semantic-search"
ENCODER_MENTAL_HEALTH = "mental-health"


class RunFormatError(DataFormatError):
    """A run file or run entry list violates the format invariants."""


@dataclass(frozen=True)
class RunConfig:
    """One retrieval configuration (one output run file)."""

    run_tag: str
    query_origin_filter: str = "all"
    encoder_label: str = ENCODER_SEMANTIC_SEARCH
    per_query_k: int = DEFAULT_PER_QUERY_K
    symptom_cap: int = DEFAULT_SYMPTOM_CAP

    def __post_init__(self) -> None:
        if not self.run_tag or any(c.isspace() for c in self.run_tag):
            raise DataFormatError(
                f"run_tag must be a non-empty token, got {self.run_tag!r}"
            )
        if self.query_origin_filter not in ORIGIN_FILTERS:
            raise DataFormatError(
                f"query_origin_filter must be one of {ORIGIN_FILTERS}, "
                f"got {self.query_origin_filter!r}"
            )
        if self.per_query_k < 1:
            raise DataFormatError(f"per_query_k must be >= 1, got {self.per_query_k}")
        if self.symptom_cap < self.per_query_k:
            raise DataFormatError(
                f"symptom_cap ({self.symptom_cap}) must be >= per_query_k "
                f"({self.per_query_k})"
            )


# The five standard configurations.  Encoder labels tie a run to the
# embedding files built with that encoder; the config file supplies the
# actual paths.
STANDARD_RUN_CONFIGS: tuple[RunConfig, ...] = (
    RunConfig("SemSearchOnBDI2Queries", ORIGIN_ORIGINAL, ENCODER_SEMANTIC_SEARCH),
    RunConfig("SemSearchOnGeneratedQueries", ORIGIN_GENERATED, ENCODER_SEMANTIC_SEARCH),
    RunConfig("SemSearchOnAllQueries", "all", ENCODER_SEMANTIC_SEARCH),
    RunConfig("SemSearchOnBDI2QueriesMentalRoberta", ORIGIN_ORIGINAL, ENCODER_MENTAL_HEALTH),
    RunConfig("SemSearchOnGeneratedQueriesMentalRoberta", ORIGIN_GENERATED, ENCODER_MENTAL_HEALTH),
)


@dataclass(frozen=True)
class RunEntry:
    symptom_index: int
    doc_id: str
    rank: int
    score: float
    run_tag: str


def matches_origin(origin: str, origin_filter: str) -> bool:
    return origin_filter == "all" or origin == origin_filter


def build_symptom_ranking(
    symptom_index: int,
    queries: Sequence[QueryText],
    corpus_store: EmbeddingStore,
    query_store: EmbeddingStore,
    cfg: RunConfig,
) -> list[RunEntry]:
    """Merge per-query top-k candidate lists into one capped ranking.

    Generated queries attach to their symptom regardless of option; the
    merge keeps each doc's maximum score over all of the symptom's
    queries, so adding queries never lowers a doc's merged score.
    """
    best: dict[str, float] = {}
    for query in queries:
        if query.symptom_index != symptom_index:
            raise DataFormatError(
                f"query {query.query_id} belongs to symptom {query.symptom_index}, "
                f"not {symptom_index}"
            )
        try:
            vec = query_store.vector(query.query_id)
        except KeyError as exc:
            raise DataFormatError(
                f"query {query.query_id} has no vector in the query embedding store"
            ) from exc
        for hit in top_k(corpus_store, vec, cfg.per_query_k):
            prev = best.get(hit.doc_id)
            if prev is None or hit.score > prev:
                best[hit.doc_id] = hit.score
    merged = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    merged = merged[: cfg.symptom_cap]
    return [
        RunEntry(
            symptom_index=symptom_index,
            doc_id=doc_id,
            rank=rank,
            score=score,
            run_tag=cfg.run_tag,
        )
        for rank, (doc_id, score) in enumerate(merged, start=1)
    ]


def build_run(
    questionnaire: Questionnaire,
    queries: Sequence[QueryText],
    corpus_store: EmbeddingStore,
    query_store: EmbeddingStore,
    cfg: RunConfig,
) -> list[RunEntry]:
    """Build one run: all 21 symptom rankings under cfg's origin filter."""
    if corpus_store.dim != query_store.dim:
        raise DataFormatError(
            f"corpus embeddings have dimension {corpus_store.dim} but query "
            f"embeddings have dimension {query_store.dim}"
        )
    valid_options = {s.index: len(s.options) for s in questionnaire.symptoms}
    for q in queries:
        count = valid_options.get(q.symptom_index)
        if count is None:
            raise DataFormatError(
                f"query {q.query_id}: unknown symptom index {q.symptom_index}"
            )
        if not 0 <= q.option_index < count:
            raise DataFormatError(
                f"query {q.query_id}: symptom {q.symptom_index} has no "
                f"option {q.option_index}"
            )
    entries: list[RunEntry] = []
    for symptom_index in range(1, SYMPTOM_COUNT + 1):
        selected = sorted(
            (
                q
                for q in queries
                if q.symptom_index == symptom_index
                and matches_origin(q.origin, cfg.query_origin_filter)
            ),
            key=lambda q: q.query_id,
        )
        entries.extend(
            build_symptom_ranking(symptom_index, selected, corpus_store, query_store, cfg)
        )
    return entries


def validate_run(entries: Sequence[RunEntry], max_per_symptom: int | None = None) -> None:
    """Check run invariants: one tag, contiguous ranks from 1 per symptom,
    non-increasing scores, unique doc_ids, optional per-symptom cap."""
    if not entries:
        return
    tags = {e.run_tag for e in entries}
    if len(tags) > 1:
        raise RunFormatError(f"run mixes tags: {sorted(tags)}")
    by_symptom: dict[int, list[RunEntry]] = {}
    for e in entries:
        if not 1 <= e.symptom_index <= SYMPTOM_COUNT:
            raise RunFormatError(
                f"symptom index {e.symptom_index} outside 1..{SYMPTOM_COUNT}"
            )
        by_symptom.setdefault(e.symptom_index, []).append(e)
    for symptom_index, group in sorted(by_symptom.items()):
        group = sorted(group, key=lambda e: e.rank)
        docs: set[str] = set()
        for position, e in enumerate(group, start=1):
            if e.rank != position:
                raise RunFormatError(
                    f"symptom {symptom_index}: ranks not contiguous from 1 "
                    f"(found rank {e.rank} at position {position})"
                )
            if e.doc_id in docs:
                raise RunFormatError(
                    f"symptom {symptom_index}: duplicate doc_id {e.doc_id!r}"
                )
            docs.add(e.doc_id)
        for earlier, later in zip(group, group[1:]):
            if later.score > earlier.score:
                raise RunFormatError(
                    f"symptom {symptom_index}: score increases from rank "
                    f"{earlier.rank} to {later.rank}"
                )
        if max_per_symptom is not None and len(group) > max_per_symptom:
            raise RunFormatError(
                f"symptom {symptom_index} has {len(group)} entries, "
                f"cap is {max_per_symptom}"
            )


def format_run_line(entry: RunEntry) -> str:
    return (
        f"{entry.symptom_index} Q0 {entry.doc_id} {entry.rank} "
        f"{entry.score:.6f} {entry.run_tag}"
    )


def write_run(entries: Sequence[RunEntry], out: IO[str]) -> None:
    """Write a validated run sorted by (symptom, rank)."""
    validate_run(entries)
    for entry in sorted(entries, key=lambda e: (e.symptom_index, e.rank)):
        out.write(format_run_line(entry) + "\n")


def read_run(
    source: IO[str], max_per_symptom: int | None = DEFAULT_SYMPTOM_CAP
) -> list[RunEntry]:
    """Parse and validate a run file; scores come back 6-decimal rounded."""
    entries: list[RunEntry] = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise RunFormatError(
                f"run file line {lineno}: expected 6 fields, got {len(fields)}"
            )
        symptom_str, literal, doc_id, rank_str, score_str, run_tag = fields
        if literal != "Q0":
            raise RunFormatError(
                f"run file line {lineno}: second field must be Q0, got {literal!r}"
            )
        try:
            symptom_index = int(symptom_str)
            rank = int(rank_str)
            score = float(score_str)
        except ValueError as exc:
            raise RunFormatError(f"run file line {lineno}: {exc}") from exc
        if rank < 1:
            raise RunFormatError(f"run file line {lineno}: rank must be >= 1, got {rank}")
        entries.append(
            RunEntry(
                symptom_index=symptom_index,
                doc_id=doc_id,
                rank=rank,
                score=score,
                run_tag=run_tag,
            )
        )
    try:
        validate_run(entries, max_per_symptom=max_per_symptom)
    except RunFormatError as exc:
        raise RunFormatError(f"run file invalid: {exc}") from exc
    return entries
