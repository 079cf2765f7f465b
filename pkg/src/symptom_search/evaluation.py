"""Relevance judgments, pooling, and ranking metrics.

Judgments carry three binary labels, one per annotator.  Two
aggregation modes turn them into a relevant set per symptom: majority
(at least two of three) and unanimity (all three).  Candidate pools for
annotation are the union of every run's top-k per symptom.

Metrics are uninterpolated average precision, R-Precision, P@10 with a
fixed denominator, and binary-gain NDCG@1000 with a log2(rank + 1)
discount whose ideal DCG sums the first min(R, n) positions.  Docs
missing from the qrels count as non-relevant; symptoms with no relevant
docs are excluded from the means and reported as excluded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .errors import DataFormatError
from .retrieval import RunEntry

MODE_MAJORITY = "majority"
MODE_UNANIMITY = "unanimity"
MODES = (MODE_MAJORITY, MODE_UNANIMITY)

ANNOTATOR_COUNT = 3
DEFAULT_POOL_K = 50
DEFAULT_PRECISION_CUTOFF = 10
DEFAULT_NDCG_CUTOFF = 1000


class QrelsFormatError(DataFormatError):
    """A qrels file or judgment set is malformed."""


@dataclass(frozen=True)
class Judgment:
    """Three annotators' binary labels for one (symptom, doc) pair."""

    symptom_index: int
    doc_id: str
    labels: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.labels) != ANNOTATOR_COUNT:
            raise QrelsFormatError(
                f"{self.symptom_index}/{self.doc_id}: expected "
                f"{ANNOTATOR_COUNT} labels, got {len(self.labels)}"
            )
        if any(label not in (0, 1) for label in self.labels):
            raise QrelsFormatError(
                f"{self.symptom_index}/{self.doc_id}: labels must be 0 or 1, "
                f"got {self.labels}"
            )


@dataclass(frozen=True)
class QrelsSet:
    """Aggregated relevance: judged and relevant doc sets per symptom."""

    mode: str
    relevant: Mapping[int, frozenset[str]]
    judged: Mapping[int, frozenset[str]]

    def relevant_count(self) -> int:
        return sum(len(docs) for docs in self.relevant.values())

    def judged_count(self) -> int:
        return sum(len(docs) for docs in self.judged.values())


def is_relevant(labels: Sequence[int], mode: str) -> bool:
    votes = sum(labels)
    if mode == MODE_MAJORITY:
        return votes >= 2
    if mode == MODE_UNANIMITY:
        return votes == ANNOTATOR_COUNT
    raise DataFormatError(f"mode must be one of {MODES}, got {mode!r}")


def aggregate(judgments: Iterable[Judgment], mode: str) -> QrelsSet:
    """Collapse per-annotator labels into per-symptom relevant sets.

    Unanimity relevance implies majority relevance, so the unanimity
    sets are always subsets of the majority sets for the same judgments.
    """
    if mode not in MODES:
        raise DataFormatError(f"mode must be one of {MODES}, got {mode!r}")
    relevant: dict[int, set[str]] = {}
    judged: dict[int, set[str]] = {}
    seen: set[tuple[int, str]] = set()
    for judgment in judgments:
        key = (judgment.symptom_index, judgment.doc_id)
        if key in seen:
            raise QrelsFormatError(
                f"duplicate judgment for symptom {judgment.symptom_index}, "
                f"doc {judgment.doc_id!r}"
            )
        seen.add(key)
        judged.setdefault(judgment.symptom_index, set()).add(judgment.doc_id)
        if is_relevant(judgment.labels, mode):
            relevant.setdefault(judgment.symptom_index, set()).add(judgment.doc_id)
    return QrelsSet(
        mode=mode,
        relevant={s: frozenset(docs) for s, docs in relevant.items()},
        judged={s: frozenset(docs) for s, docs in judged.items()},
    )


def pool_runs(
    runs: Iterable[Sequence[RunEntry]], k: int = DEFAULT_POOL_K
) -> dict[int, set[str]]:
    """Union of each run's top-k doc_ids, per symptom."""
    if k < 1:
        raise DataFormatError(f"pool depth must be >= 1, got {k}")
    pools: dict[int, set[str]] = {}
    for run in runs:
        for entry in run:
            if entry.rank <= k:
                pools.setdefault(entry.symptom_index, set()).add(entry.doc_id)
    return pools


def write_pool(pools: Mapping[int, set[str]], out: IO[str]) -> None:
    for symptom_index in sorted(pools):
        for doc_id in sorted(pools[symptom_index]):
            out.write(f"{symptom_index}\t{doc_id}\n")


# --- metrics; ranking is an ordered doc_id sequence, highest rank first ---


def _require_relevant(relevant: frozenset[str] | set[str]) -> None:
    if not relevant:
        raise DataFormatError("metrics need at least one relevant doc")


def average_precision(ranking: Sequence[str], relevant: frozenset[str] | set[str]) -> float:
    """Mean of precision values at each relevant doc's rank, over R.

    Relevant docs missing from the ranking contribute zero.
    """
    _require_relevant(relevant)
    hits = 0
    precision_sum = 0.0
    for rank, doc_id in enumerate(ranking, start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / len(relevant)


def r_precision(ranking: Sequence[str], relevant: frozenset[str] | set[str]) -> float:
    """Precision over the first R ranks, R = number of relevant docs."""
    _require_relevant(relevant)
    r = len(relevant)
    hits = sum(1 for doc_id in ranking[:r] if doc_id in relevant)
    return hits / r


def precision_at(
    ranking: Sequence[str],
    relevant: frozenset[str] | set[str],
    n: int = DEFAULT_PRECISION_CUTOFF,
) -> float:
    """Precision at cutoff n with a fixed denominator of n, even when
    the ranking is shorter."""
    _require_relevant(relevant)
    if n < 1:
        raise DataFormatError(f"cutoff must be >= 1, got {n}")
    hits = sum(1 for doc_id in ranking[:n] if doc_id in relevant)
    return hits / n


def ndcg_at(
    ranking: Sequence[str],
    relevant: frozenset[str] | set[str],
    n: int = DEFAULT_NDCG_CUTOFF,
) -> float:
    """Binary-gain NDCG at cutoff n with a log2(rank + 1) discount.

    The ideal DCG places one relevant doc on each of the first
    min(R, n) positions.
    """
    _require_relevant(relevant)
    if n < 1:
        raise DataFormatError(f"cutoff must be >= 1, got {n}")
    dcg = 0.0
    for rank, doc_id in enumerate(ranking[:n], start=1):
        if doc_id in relevant:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(
        1.0 / math.log2(rank + 1) for rank in range(1, min(len(relevant), n) + 1)
    )
    return dcg / ideal


@dataclass(frozen=True)
class SymptomMetrics:
    ap: float
    r_prec: float
    p_at_10: float
    ndcg_at_1000: float


@dataclass(frozen=True)
class MetricsReport:
    run_tag: str
    mode: str
    per_symptom: Mapping[int, SymptomMetrics]
    mean: SymptomMetrics
    evaluated_query_count: int
    excluded_symptoms: tuple[int, ...]
    relevant_total: int


def evaluate_run(
    run: Sequence[RunEntry],
    qrels: QrelsSet,
    precision_cutoff: int = DEFAULT_PRECISION_CUTOFF,
    ndcg_cutoff: int = DEFAULT_NDCG_CUTOFF,
) -> MetricsReport:
    """Score one run against aggregated qrels.

    Every judged symptom is scored; symptoms whose relevant set is empty
    under the qrels' mode are excluded from the means and listed.  A run
    that mentions a symptom the qrels never judged is rejected.
    """
    rankings: dict[int, list[tuple[int, str]]] = {}
    tags = {e.run_tag for e in run}
    if len(tags) > 1:
        raise DataFormatError(f"run mixes tags: {sorted(tags)}")
    run_tag = next(iter(tags)) if tags else "(empty)"
    for entry in run:
        if entry.symptom_index not in qrels.judged:
            raise DataFormatError(
                f"run references symptom {entry.symptom_index}, which the "
                f"qrels never judged"
            )
        rankings.setdefault(entry.symptom_index, []).append((entry.rank, entry.doc_id))

    per_symptom: dict[int, SymptomMetrics] = {}
    excluded: list[int] = []
    for symptom_index in sorted(qrels.judged):
        relevant = qrels.relevant.get(symptom_index, frozenset())
        if not relevant:
            excluded.append(symptom_index)
            continue
        ordered = [doc for _, doc in sorted(rankings.get(symptom_index, []))]
        per_symptom[symptom_index] = SymptomMetrics(
            ap=average_precision(ordered, relevant),
            r_prec=r_precision(ordered, relevant),
            p_at_10=precision_at(ordered, relevant, precision_cutoff),
            ndcg_at_1000=ndcg_at(ordered, relevant, ndcg_cutoff),
        )

    count = len(per_symptom)
    if count:
        mean = SymptomMetrics(
            ap=sum(m.ap for m in per_symptom.values()) / count,
            r_prec=sum(m.r_prec for m in per_symptom.values()) / count,
            p_at_10=sum(m.p_at_10 for m in per_symptom.values()) / count,
            ndcg_at_1000=sum(m.ndcg_at_1000 for m in per_symptom.values()) / count,
        )
    else:
        mean = SymptomMetrics(0.0, 0.0, 0.0, 0.0)
    return MetricsReport(
        run_tag=run_tag,
        mode=qrels.mode,
        per_symptom=per_symptom,
        mean=mean,
        evaluated_query_count=count,
        excluded_symptoms=tuple(excluded),
        relevant_total=qrels.relevant_count(),
    )


def format_report(report: MetricsReport) -> str:
    """Human-readable table plus machine-readable metric lines."""
    lines = [
        f"run: {report.run_tag}",
        f"aggregation: {report.mode}",
        f"judged relevant docs: {report.relevant_total}",
        f"evaluated symptoms: {report.evaluated_query_count}"
        + (
            f" (excluded, no relevant docs: "
            f"{', '.join(str(s) for s in report.excluded_symptoms)})"
            if report.excluded_symptoms
            else ""
        ),
        "",
        f"{'symptom':>8}  {'ap':>8}  {'r_prec':>8}  {'p_at_10':>8}  {'ndcg_at_1000':>12}",
    ]
    for symptom_index in sorted(report.per_symptom):
        m = report.per_symptom[symptom_index]
        lines.append(
            f"{symptom_index:>8}  {m.ap:>8.6f}  {m.r_prec:>8.6f}  "
            f"{m.p_at_10:>8.6f}  {m.ndcg_at_1000:>12.6f}"
        )
    mean = report.mean
    lines.append(
        f"{'mean':>8}  {mean.ap:>8.6f}  {mean.r_prec:>8.6f}  "
        f"{mean.p_at_10:>8.6f}  {mean.ndcg_at_1000:>12.6f}"
    )
    lines.append("")
    for metric, pick in (
        ("ap", lambda m: m.ap),
        ("r_prec", lambda m: m.r_prec),
        ("p_at_10", lambda m: m.p_at_10),
        ("ndcg_at_1000", lambda m: m.ndcg_at_1000),
    ):
        for symptom_index in sorted(report.per_symptom):
            lines.append(
                f"{metric}\t{symptom_index}\t{pick(report.per_symptom[symptom_index]):.6f}"
            )
        lines.append(f"{metric}\tmean\t{pick(mean):.6f}")
    return "\n".join(lines) + "\n"


# --- qrels files ---
# extended (annotator detail):  symptom_index doc_id label1 label2 label3
# standard (interoperability):  symptom_index 0 doc_id rel


def read_qrels(source: IO[str]) -> list[Judgment]:
    """Read either qrels format; the first data line fixes the format."""
    judgments: list[Judgment] = []
    fmt: str | None = None
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if fmt is None:
            if len(fields) == 5:
                fmt = "extended"
            elif len(fields) == 4:
                fmt = "standard"
            else:
                raise QrelsFormatError(
                    f"qrels line {lineno}: expected 4 or 5 fields, got {len(fields)}"
                )
        try:
            if fmt == "extended":
                if len(fields) != 5:
                    raise QrelsFormatError(
                        f"qrels line {lineno}: expected 5 fields, got {len(fields)}"
                    )
                symptom_index = int(fields[0])
                doc_id = fields[1]
                labels = (int(fields[2]), int(fields[3]), int(fields[4]))
            else:
                if len(fields) != 4:
                    raise QrelsFormatError(
                        f"qrels line {lineno}: expected 4 fields, got {len(fields)}"
                    )
                if fields[1] != "0":
                    raise QrelsFormatError(
                        f"qrels line {lineno}: second field must be 0, got {fields[1]!r}"
                    )
                symptom_index = int(fields[0])
                doc_id = fields[2]
                rel = int(fields[3])
                labels = (rel, rel, rel)
        except ValueError as exc:
            raise QrelsFormatError(f"qrels line {lineno}: {exc}") from exc
        try:
            judgments.append(
                Judgment(symptom_index=symptom_index, doc_id=doc_id, labels=labels)
            )
        except QrelsFormatError as exc:
            raise QrelsFormatError(f"qrels line {lineno}: {exc}") from exc
    return judgments


def write_qrels(
    judgments: Iterable[Judgment], out: IO[str], fmt: str = "extended"
) -> None:
    if fmt not in ("extended", "standard"):
        raise DataFormatError(f"qrels format must be extended or standard, got {fmt!r}")
    for judgment in judgments:
        if fmt == "extended":
            l1, l2, l3 = judgment.labels
            out.write(
                f"{judgment.symptom_index} {judgment.doc_id} {l1} {l2} {l3}\n"
            )
        else:
            if len(set(judgment.labels)) != 1:
                raise DataFormatError(
                    f"cannot write symptom {judgment.symptom_index} doc "
                    f"{judgment.doc_id!r} in standard format: annotators disagree"
                )
            out.write(
                f"{judgment.symptom_index} 0 {judgment.doc_id} {judgment.labels[0]}\n"
            )
