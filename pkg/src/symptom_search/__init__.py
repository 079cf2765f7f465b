"""Rank social-media sentences against depression questionnaire symptoms.

The pipeline: ingest per-user TREC sentence files into a canonical
corpus, turn questionnaire response options (and synthetic variants of
them) into queries, run exact cosine search over precomputed sentence
embeddings, merge per-query results into per-symptom rankings, and
evaluate the resulting TREC run files against annotator judgments.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import DataFormatError, ServiceError, SymptomSearchError
from .questionnaire import (
    Questionnaire,
    ResponseOption,
    Symptom,
    all_response_options,
    load_questionnaire,
)
from .store import EmbeddingStore, ScoredDoc, cosine, load_store, top_k, write_store

__all__ = [
    "DataFormatError",
    "EmbeddingStore",
    "Questionnaire",
    "ResponseOption",
    "ScoredDoc",
    "ServiceError",
    "Symptom",
    "SymptomSearchError",
    "all_response_options",
    "cosine",
    "load_questionnaire",
    "load_store",
    "top_k",
    "write_store",
    "__version__",
]
