"""Sentence corpus ingestion.

Input corpora arrive as one TREC-formatted file per user: DOC blocks
holding a DOCNO and a TEXT field.  Ingestion parses those files,
strips URLs, drops sentences that are empty afterwards or not in
English, and archives everything in a canonical tab-separated file that
keeps dropped sentences (flagged) so the preprocessing is auditable and
reversible.
"""
from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable

from .errors import DataFormatError
from .language import Detector, HeuristicEnglishDetector

logger = logging.getLogger(__name__)


class TrecParseError(DataFormatError):
    """A TREC sentence file is malformed; message carries a byte offset."""


class CorpusFileError(DataFormatError):
    """The canonical corpus file is malformed."""


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence of one user's writings."""

    doc_id: str
    user_id: str
    text: str
    kept: bool = False


@dataclass(frozen=True)
class CorpusStats:
    users: int
    sentences_total: int
    sentences_kept: int
    dropped_non_english: int
    dropped_empty: int

    def __post_init__(self) -> None:
        accounted = self.sentences_kept + self.dropped_non_english + self.dropped_empty
        if accounted != self.sentences_total:
            raise ValueError(
                f"stats do not add up: {self.sentences_kept} kept + "
                f"{self.dropped_non_english} non-English + {self.dropped_empty} empty "
                f"!= {self.sentences_total} total"
            )


_DOC_OPEN = b"<DOC>"
_DOC_CLOSE = b"</DOC>"
_TEXT_OPEN = b"<TEXT>"
_TEXT_CLOSE = b"</TEXT>"
_DOCNO_RE = re.compile(rb"<DOCNO>(.*)</DOCNO>\s*$", re.IGNORECASE)
_TEXT_INLINE_RE = re.compile(rb"<TEXT>(.*)</TEXT>\s*$", re.IGNORECASE | re.DOTALL)


def _decode(raw: bytes, offset: int) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TrecParseError(f"byte offset {offset}: invalid UTF-8 ({exc})") from exc


def parse_trec_file(source: bytes | IO[bytes], user_id: str) -> list[SentenceRecord]:
    """Parse one user's TREC sentence file into records, order preserved.

    Tags are matched case-insensitively; unknown tags inside a DOC block
    are skipped.  Errors carry the byte offset of the offending line.
    """
    data = source if isinstance(source, bytes) else source.read()
    records: list[SentenceRecord] = []
    seen: set[str] = set()

    in_doc = False
    in_text = False
    doc_offset = 0
    docno: str | None = None
    text_parts: list[str] = []

    offset = 0
    for raw_line in data.splitlines(keepends=True):
        line_offset = offset
        offset += len(raw_line)
        stripped = raw_line.strip()
        upper = stripped.upper()

        if in_text:
            if upper == _TEXT_CLOSE:
                in_text = False
            elif upper.endswith(_TEXT_CLOSE):
                body = stripped[: len(stripped) - len(_TEXT_CLOSE)]
                text_parts.append(_decode(body, line_offset))
                in_text = False
            else:
                text_parts.append(_decode(stripped, line_offset))
            continue

        if not in_doc:
            if not stripped:
                continue
            if upper == _DOC_OPEN:
                in_doc = True
                doc_offset = line_offset
                docno = None
                text_parts = []
                continue
            raise TrecParseError(
                f"byte offset {line_offset}: expected {_DOC_OPEN.decode()} "
                f"outside any block, got {_decode(stripped, line_offset)!r}"
            )

        # inside a DOC block
        if upper == _DOC_CLOSE:
            if docno is None:
                raise TrecParseError(
                    f"byte offset {doc_offset}: DOC block has no DOCNO field"
                )
            records.append(
                SentenceRecord(
                    doc_id=docno,
                    user_id=user_id,
                    text="\n".join(text_parts).strip(),
                )
            )
            in_doc = False
            continue

        docno_match = _DOCNO_RE.match(stripped)
        if docno_match:
            value = _decode(docno_match.group(1), line_offset).strip()
            if not value or any(c.isspace() for c in value):
                raise TrecParseError(
                    f"byte offset {line_offset}: DOCNO must be a single "
                    f"non-empty token, got {value!r}"
                )
            if value in seen:
                raise TrecParseError(
                    f"byte offset {line_offset}: duplicate DOCNO {value!r}"
                )
            seen.add(value)
            docno = value
            continue
        if upper.startswith(b"<DOCNO>"):
            raise TrecParseError(
                f"byte offset {line_offset}: DOCNO must close on the same line"
            )

        inline_text = _TEXT_INLINE_RE.match(stripped)
        if inline_text:
            text_parts.append(_decode(inline_text.group(1), line_offset).strip())
            continue
        if upper == _TEXT_OPEN:
            in_text = True
            continue
        if upper.startswith(_TEXT_OPEN):
            text_parts.append(_decode(stripped[len(_TEXT_OPEN):], line_offset))
            in_text = True
            continue

        # unknown sibling tag or stray content: tolerated
        continue

    if in_doc or in_text:
        raise TrecParseError(
            f"byte offset {doc_offset}: unterminated DOC block at end of file"
        )
    return records


def write_trec_file(records: Iterable[SentenceRecord], out: IO[bytes]) -> None:
    """Write records as TREC DOC blocks (the inverse of parse_trec_file)."""
    for record in records:
        out.write(_DOC_OPEN + b"\n")
        out.write(b"<DOCNO> " + record.doc_id.encode("utf-8") + b" </DOCNO>\n")
        out.write(_TEXT_OPEN + b"\n")
        out.write(record.text.encode("utf-8") + b"\n")
        out.write(_TEXT_CLOSE + b"\n")
        out.write(_DOC_CLOSE + b"\n")


# URL stripping: a scheme anywhere, or "www." at a token start, eats up
# to the next whitespace.  Remaining whitespace is collapsed.
_URL_RE = re.compile(r"(?:https?://\S*|(?<!\S)www\.\S*)")


def strip_urls(text: str) -> str:
    without = _URL_RE.sub(" ", text)
    return " ".join(without.split())


MIN_TOKENS_KEPT = 2


def preprocess_corpus(
    records: Iterable[SentenceRecord],
    detector: Detector | None = None,
) -> tuple[list[SentenceRecord], CorpusStats]:
    """Strip URLs, drop near-empty and non-English sentences, count.

    Every input record appears in the output with its text URL-stripped
    and its kept flag set; nothing is removed from the list.  The pass is
    idempotent: running it on its own output changes nothing.
    """
    if detector is None:
        detector = HeuristicEnglishDetector()
    out: list[SentenceRecord] = []
    kept = 0
    non_english = 0
    empty = 0
    users: set[str] = set()
    total = 0
    for record in records:
        total += 1
        users.add(record.user_id)
        text = strip_urls(record.text)
        if len(text.split()) < MIN_TOKENS_KEPT:
            empty += 1
            out.append(replace(record, text=text, kept=False))
            continue
        try:
            is_english = bool(detector(text))
        except Exception as exc:  # detector must never sink the pipeline
            logger.warning("detector failed on %r: %s", record.doc_id, exc)
            is_english = False
        if not is_english:
            non_english += 1
            out.append(replace(record, text=text, kept=False))
            continue
        kept += 1
        out.append(replace(record, text=text, kept=True))
    stats = CorpusStats(
        users=len(users),
        sentences_total=total,
        sentences_kept=kept,
        dropped_non_english=non_english,
        dropped_empty=empty,
    )
    return out, stats


def format_stats(stats: CorpusStats) -> str:
    lines = [
        f"users\t{stats.users}",
        f"sentences_total\t{stats.sentences_total}",
        f"sentences_kept\t{stats.sentences_kept}",
        f"dropped_non_english\t{stats.dropped_non_english}",
        f"dropped_empty\t{stats.dropped_empty}",
    ]
    return "\n".join(lines) + "\n"


def _escape_text(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


_UNESCAPE_MAP = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _unescape_text(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text) and text[i + 1] in _UNESCAPE_MAP:
            out.append(_UNESCAPE_MAP[text[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _check_token(value: str, what: str, lineno: int | None = None) -> None:
    where = f"line {lineno}: " if lineno is not None else ""
    if not value or any(c.isspace() for c in value):
        raise CorpusFileError(f"{where}{what} must be a non-empty token, got {value!r}")


def write_corpus_file(records: Iterable[SentenceRecord], out: IO[str]) -> None:
    """Write the canonical corpus file: doc_id, user_id, kept flag, text.

    Tab-separated, one record per line; tabs, newlines, and backslashes
    in the text are escaped so the original text is recoverable.
    """
    for record in records:
        _check_token(record.doc_id, "doc_id")
        _check_token(record.user_id, "user_id")
        out.write(
            f"{record.doc_id}\t{record.user_id}\t{int(record.kept)}\t"
            f"{_escape_text(record.text)}\n"
        )


def read_corpus_file(source: IO[str]) -> list[SentenceRecord]:
    records: list[SentenceRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise CorpusFileError(
                f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}"
            )
        doc_id, user_id, kept_flag, text = fields
        _check_token(doc_id, "doc_id", lineno)
        _check_token(user_id, "user_id", lineno)
        if kept_flag not in ("0", "1"):
            raise CorpusFileError(
                f"line {lineno}: kept flag must be 0 or 1, got {kept_flag!r}"
            )
        if doc_id in seen:
            raise CorpusFileError(f"line {lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        records.append(
            SentenceRecord(
                doc_id=doc_id,
                user_id=user_id,
                text=_unescape_text(text),
                kept=kept_flag == "1",
            )
        )
    return records


def ingest_directory(directory: str | Path, jobs: int = 1) -> list[SentenceRecord]:
    """Parse every TREC file in a directory (filename stem = user id).

    Files are processed in sorted name order so the merged record list is
    stable regardless of worker count.  doc_ids must be unique across the
    whole directory.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"corpus directory not found: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.is_file())
    if not paths:
        raise DataFormatError(f"corpus directory is empty: {directory}")

    def parse_one(path: Path) -> list[SentenceRecord]:
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise DataFormatError(f"cannot read {path}: {exc}") from exc
        try:
            return parse_trec_file(data, user_id=path.stem)
        except TrecParseError as exc:
            raise TrecParseError(f"{path.name}: {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_file = list(pool.map(parse_one, paths))
    else:
        per_file = [parse_one(p) for p in paths]

    merged: list[SentenceRecord] = []
    owner: dict[str, str] = {}
    for path, records in zip(paths, per_file):
        for record in records:
            if record.doc_id in owner:
                raise DataFormatError(
                    f"doc_id {record.doc_id!r} appears in both "
                    f"{owner[record.doc_id]} and {path.name}"
                )
            owner[record.doc_id] = path.name
        merged.extend(records)
    return merged
