"""Embedding store: unit vectors keyed by id, with exact cosine search.

Binary file layout (little-endian):

    magic "EMB1" | u32 version=1 | u32 dim | u64 count
    then per record: u16 id byte length | id (UTF-8) | dim float32 values

A JSONL alternative ({"id": ..., "vec": [...]} per line) is accepted on
load for hand-written fixtures; the binary layout is canonical.  Vectors
are brought to unit L2 norm on load; an exactly zero vector is an error.
Search is an exact full scan: scores are float32 values whose dot
products are accumulated in float64, ranked by descending score with
ties broken by ascending doc_id.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataFormatError

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<H")

# norms this close to 1 are considered already unit (keeps reloading
# a normalized store bit-stable)
_UNIT_SLACK = 1e-6
_SCAN_BLOCK_ROWS = 65536


class StoreFormatError(DataFormatError):
    """An embedding file violates the layout or its invariants."""


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float


def _unit_rows(matrix: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    """Normalize rows to unit L2 norm (float64 math, float32 storage)."""
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise StoreFormatError(f"zero vector for id {ids[int(zero[0])]!r}")
    off = np.abs(norms - 1.0) > _UNIT_SLACK
    if np.any(off):
        scaled = matrix.astype(np.float64)
        scaled[off] /= norms[off, np.newaxis]
        return scaled.astype(np.float32)
    return np.ascontiguousarray(matrix, dtype=np.float32)


class EmbeddingStore:
    """Immutable id -> unit vector map over a dense float32 matrix."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray) -> None:
        if matrix.ndim != 2:
            raise StoreFormatError("matrix must be 2-dimensional")
        if len(ids) != matrix.shape[0]:
            raise StoreFormatError(
                f"{len(ids)} ids for {matrix.shape[0]} vectors"
            )
        if matrix.shape[0] and matrix.shape[1] < 1:
            raise StoreFormatError("vectors must have at least one dimension")
        self._ids: tuple[str, ...] = tuple(ids)
        index: dict[str, int] = {}
        for row, doc_id in enumerate(self._ids):
            if not doc_id:
                raise StoreFormatError(f"empty id at record {row}")
            if doc_id in index:
                raise StoreFormatError(f"duplicate id {doc_id!r}")
            index[doc_id] = row
        self._index = index
        self._matrix = _unit_rows(matrix, self._ids)
        self._matrix.setflags(write=False)

    @classmethod
    def from_entries(
        cls, entries: Iterable[tuple[str, Sequence[float]]], dim: int | None = None
    ) -> "EmbeddingStore":
        ids: list[str] = []
        rows: list[np.ndarray] = []
        for doc_id, vec in entries:
            arr = np.asarray(vec, dtype=np.float32)
            if arr.ndim != 1:
                raise StoreFormatError(f"id {doc_id!r}: vector must be 1-dimensional")
            if dim is None:
                dim = int(arr.shape[0])
            if arr.shape[0] != dim:
                raise StoreFormatError(
                    f"id {doc_id!r}: dimension {arr.shape[0]} disagrees with {dim}"
                )
            ids.append(doc_id)
            rows.append(arr)
        if dim is None or dim < 1:
            raise StoreFormatError("cannot build a store with no dimensionality")
        matrix = (
            np.vstack(rows) if rows else np.empty((0, dim), dtype=np.float32)
        )
        return cls(ids, matrix)

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._index

    def vector(self, doc_id: str) -> np.ndarray:
        row = self._index.get(doc_id)
        if row is None:
            raise KeyError(f"no vector for id {doc_id!r}")
        return self._matrix[row]


def iter_binary_records(source: IO[bytes]) -> Iterator[tuple[str, np.ndarray]]:
    """Stream (id, raw vector) pairs from a binary embedding file.

    Validates the header and record framing; does not normalize.  The
    sequential layout means huge files never need full materialization.
    """
    header = source.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise StoreFormatError("file too short for a header")
    magic, version, dim, count = _HEADER.unpack(header)
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise StoreFormatError(f"unsupported version {version}, expected {VERSION}")
    if dim < 1:
        raise StoreFormatError(f"dimension must be >= 1, got {dim}")
    offset = _HEADER.size
    vec_bytes = dim * 4
    for record in range(count):
        len_raw = source.read(_ID_LEN.size)
        if len(len_raw) < _ID_LEN.size:
            raise StoreFormatError(
                f"truncated at byte offset {offset}: expected record {record} "
                f"of {count}"
            )
        (id_len,) = _ID_LEN.unpack(len_raw)
        body = source.read(id_len + vec_bytes)
        if len(body) < id_len + vec_bytes:
            raise StoreFormatError(
                f"truncated at byte offset {offset}: record {record} is incomplete"
            )
        try:
            doc_id = body[:id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreFormatError(
                f"record {record}: id is not valid UTF-8 ({exc})"
            ) from exc
        vec = np.frombuffer(body[id_len:], dtype="<f4").astype(np.float32)
        yield doc_id, vec
        offset += _ID_LEN.size + id_len + vec_bytes
    trailing = source.read(1)
    if trailing:
        raise StoreFormatError(
            f"trailing data at byte offset {offset}: header promised {count} records"
        )


def _load_jsonl(source: IO[bytes]) -> EmbeddingStore:
    entries: list[tuple[str, Sequence[float]]] = []
    dim: int | None = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict) or "id" not in obj or "vec" not in obj:
            raise StoreFormatError(f'line {lineno}: expected {{"id": ..., "vec": [...]}}')
        doc_id, vec = obj["id"], obj["vec"]
        if not isinstance(doc_id, str) or not isinstance(vec, list):
            raise StoreFormatError(f"line {lineno}: id must be a string, vec a list")
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise StoreFormatError(
                f"line {lineno}: id {doc_id!r} has dimension {len(vec)}, "
                f"file started with {dim}"
            )
        entries.append((doc_id, vec))
    if dim is None:
        raise StoreFormatError("JSONL embedding file has no records")
    return EmbeddingStore.from_entries(entries, dim=dim)


def load_store(path: str | Path) -> EmbeddingStore:
    """Load an embedding file, binary (canonical) or JSONL (fixtures)."""
    path = Path(path)
    try:
        handle = path.open("rb")
    except OSError as exc:
        raise StoreFormatError(f"cannot open embedding file {path}: {exc}") from exc
    with handle:
        head = handle.read(len(MAGIC))
        handle.seek(0)
        if head == MAGIC:
            ids: list[str] = []
            rows: list[np.ndarray] = []
            dim = 0
            for doc_id, vec in iter_binary_records(handle):
                ids.append(doc_id)
                rows.append(vec)
                dim = vec.shape[0]
            matrix = (
                np.vstack(rows) if rows else np.empty((0, max(dim, 1)), dtype=np.float32)
            )
            try:
                return EmbeddingStore(ids, matrix)
            except StoreFormatError as exc:
                raise StoreFormatError(f"{path}: {exc}") from exc
        try:
            return _load_jsonl(handle)
        except StoreFormatError as exc:
            raise StoreFormatError(f"{path}: {exc}") from exc


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the canonical binary layout."""
    path = Path(path)
    with path.open("wb") as out:
        out.write(_HEADER.pack(MAGIC, VERSION, store.dim, len(store)))
        matrix = store.matrix
        for row, doc_id in enumerate(store.ids):
            encoded = doc_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise StoreFormatError(f"id too long to encode: {doc_id[:40]!r}...")
            out.write(_ID_LEN.pack(len(encoded)))
            out.write(encoded)
            out.write(matrix[row].astype("<f4").tobytes())


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity of two unit vectors: a float64-accumulated dot,
    clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DataFormatError(
            f"cosine of mismatched dimensions: {va.shape[0]} vs {vb.shape[0]}"
        )
    return float(min(1.0, max(-1.0, float(np.dot(va, vb)))))


def _scores(store: EmbeddingStore, query: np.ndarray) -> np.ndarray:
    """Float32 cosine scores of every stored vector against a unit query."""
    scores = np.empty(len(store), dtype=np.float32)
    matrix = store.matrix
    for start in range(0, len(store), _SCAN_BLOCK_ROWS):
        block = matrix[start : start + _SCAN_BLOCK_ROWS]
        scores[start : start + block.shape[0]] = (
            block.astype(np.float64) @ query
        ).astype(np.float32)
    np.clip(scores, -1.0, 1.0, out=scores)
    return scores


def top_k(store: EmbeddingStore, query_vec: Sequence[float], k: int) -> list[ScoredDoc]:
    """Exact top-k by cosine: full scan, score descending, doc_id ascending."""
    if k < 0:
        raise DataFormatError(f"k must be >= 0, got {k}")
    query = np.asarray(query_vec, dtype=np.float64)
    if query.ndim != 1 or query.shape[0] != store.dim:
        got = query.shape[0] if query.ndim == 1 else query.shape
        raise DataFormatError(
            f"query dimension {got} does not match store dimension {store.dim}"
        )
    if k == 0 or len(store) == 0:
        return []
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise DataFormatError("query vector is all zeros")
    query = query / norm
    scores = _scores(store, query)
    ids = np.asarray(store.ids)
    order = np.lexsort((ids, -scores))[: min(k, len(store))]
    return [ScoredDoc(doc_id=str(ids[i]), score=float(scores[i])) for i in order]
