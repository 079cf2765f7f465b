"""Shared exception types.

Two broad families matter to callers: data problems (malformed or
inconsistent files, violated invariants) and service problems (the
completion endpoint misbehaving).  The command line maps them to exit
codes 2 and 3 respectively.
"""
from __future__ import annotations


class SymptomSearchError(Exception):
    """Base class for every error raised by this package."""


class DataFormatError(SymptomSearchError):
    """A file, record, or argument failed validation."""


class ServiceError(SymptomSearchError):
    """The remote completion service failed in a way retries could not fix."""
