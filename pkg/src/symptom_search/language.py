"""English-or-not detection used during corpus preprocessing.

A detector is any callable str -> bool.  The default is dependency-free:
a Latin-script profile check plus an English function-word hit rate over
word tokens.  An external process speaking a one-line-in / one-line-out
protocol can be plugged in behind the same contract.  Detector failures
on degenerate input never raise; they classify as not-English and are
logged.
"""
from __future__ import annotations

import logging
import re
import shlex
import subprocess
from typing import Callable, Protocol

logger = logging.getLogger(__name__)

Detector = Callable[[str], bool]

# Function words only, and none that double as common words in other
# Latin-script languages (so no "a", "me", "no", "he"): a Spanish or
# Portuguese sentence must not clear the hit-rate threshold by accident.
ENGLISH_FUNCTION_WORDS = frozenset(
    """
    i you it we they she this that these those the and of to in is was are
    were be been being am do does did have had will would can could should
    shall might must not but or if because while with for at by from as
    into about than then there here when where how why what who whom which
    my your his her its our their them him us out up down so just very too
    again any all some more most
    """.split()
)

# Tokens for the hit-rate ratio: runs of ASCII letters and apostrophes.
_WORD_RE = re.compile(r"[a-z']+")

STOPWORD_HIT_RATE_THRESHOLD = 0.15
LATIN_LETTER_RATIO_THRESHOLD = 0.85


class HeuristicEnglishDetector:
    """Default detector: Latin-script ratio plus function-word hit rate."""

    def __init__(
        self,
        hit_rate_threshold: float = STOPWORD_HIT_RATE_THRESHOLD,
        latin_ratio_threshold: float = LATIN_LETTER_RATIO_THRESHOLD,
    ) -> None:
        self.hit_rate_threshold = hit_rate_threshold
        self.latin_ratio_threshold = latin_ratio_threshold

    def __call__(self, text: str) -> bool:
        letters = [c for c in text if c.isalpha()]
        if not letters:
            return False
        ascii_letters = sum(1 for c in letters if c.isascii())
        if ascii_letters / len(letters) < self.latin_ratio_threshold:
            return False
        tokens = _WORD_RE.findall(text.lower())
        if not tokens:
            return False
        hits = sum(1 for t in tokens if t in ENGLISH_FUNCTION_WORDS)
        return hits / len(tokens) >= self.hit_rate_threshold


class ExternalProcessDetector:
    """Delegate detection to a subprocess, one line in, one line out.

    The command is spawned once and fed one sentence per line (interior
    newlines have already been collapsed by URL stripping upstream).  It
    must answer one line per input line: "1" for English, anything else
    for not-English.  Any transport failure classifies as not-English.
    """

    def __init__(self, command: str) -> None:
        self.command = command
        self._proc: subprocess.Popen[str] | None = None
        self._broken = False

    def _ensure_started(self) -> subprocess.Popen[str] | None:
        if self._broken:
            return None
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                logger.warning("language detector %r failed to start: %s", self.command, exc)
                self._broken = True
                return None
        return self._proc

    def __call__(self, text: str) -> bool:
        proc = self._ensure_started()
        if proc is None or proc.stdin is None or proc.stdout is None:
            return False
        try:
            proc.stdin.write(text.replace("\n", " ") + "\n")
            proc.stdin.flush()
            answer = proc.stdout.readline()
        except (OSError, ValueError) as exc:
            logger.warning("language detector %r failed: %s", self.command, exc)
            self._broken = True
            return False
        if answer == "":
            logger.warning("language detector %r closed its output", self.command)
            self._broken = True
            return False
        return answer.strip() == "1"

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "ExternalProcessDetector":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class SupportsClose(Protocol):
    def close(self) -> None: ...


def make_detector(name: str) -> Detector:
    """Build a detector from a CLI-style name.

    "heuristic" gives the default; "external:CMD" wraps the subprocess
    protocol around CMD.
    """
    if name == "heuristic":
        return HeuristicEnglishDetector()
    if name.startswith("external:"):
        command = name[len("external:"):]
        if not command.strip():
            raise ValueError("external detector needs a command, e.g. external:./detect")
        return ExternalProcessDetector(command)
    raise ValueError(f"unknown detector {name!r}; use 'heuristic' or 'external:CMD'")
