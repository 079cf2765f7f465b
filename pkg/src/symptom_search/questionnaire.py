"""The 21-symptom depression questionnaire: loading, validation, option access.

File format (UTF-8, strict, no recovery on errors):

    [symptom 1] Sadness
    - option text for severity 0 (absence of the symptom)
    - option text for severity 1
    ...

    [symptom 2] Pessimism
    ...

Blank lines may separate records; anything that is not a header, an
option line, or blank is an error.  Items 16 and 18 carry seven options
each, every other item carries four, giving 90 options overall.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DataFormatError

SYMPTOM_COUNT = 21
SEVEN_OPTION_ITEMS = frozenset({16, 18})
TOTAL_OPTION_COUNT = 90

_HEADER_RE = re.compile(r"^\[symptom (\d+)\]\s*(.*\S)\s*$")
_OPTION_PREFIX = "- "


class QuestionnaireError(DataFormatError):
    """The questionnaire file is malformed or has the wrong shape."""


@dataclass(frozen=True)
class ResponseOption:
    """One answer option of one symptom.

    option_index 0 always describes absence of the symptom; higher
    indices describe increasing severity.
    """

    symptom_index: int
    option_index: int
    text: str


@dataclass(frozen=True)
class Symptom:
    index: int
    name: str
    options: tuple[ResponseOption, ...]


@dataclass(frozen=True)
class Questionnaire:
    symptoms: tuple[Symptom, ...]

    def symptom(self, index: int) -> Symptom:
        for s in self.symptoms:
            if s.index == index:
                return s
        raise KeyError(f"no symptom with index {index}")


def expected_option_count(symptom_index: int) -> int:
    return 7 if symptom_index in SEVEN_OPTION_ITEMS else 4


def parse_questionnaire(text: str) -> Questionnaire:
    """Parse questionnaire file content.  Strict: any deviation raises."""
    symptoms: list[Symptom] = []
    index: int | None = None
    name = ""
    options: list[str] = []

    def flush() -> None:
        nonlocal index, name, options
        if index is None:
            return
        opts = tuple(
            ResponseOption(symptom_index=index, option_index=i, text=t)
            for i, t in enumerate(options)
        )
        symptoms.append(Symptom(index=index, name=name, options=opts))
        index, name, options = None, "", []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip():
            continue
        header = _HEADER_RE.match(line)
        if header:
            flush()
            index = int(header.group(1))
            name = header.group(2)
            continue
        if line.startswith(_OPTION_PREFIX) or line == _OPTION_PREFIX.strip():
            if index is None:
                raise QuestionnaireError(
                    f"line {lineno}: option text before any [symptom N] header"
                )
            option_text = line[len(_OPTION_PREFIX):].strip()
            if not option_text:
                raise QuestionnaireError(
                    f"line {lineno}: empty option text under symptom {index}"
                )
            options.append(option_text)
            continue
        raise QuestionnaireError(f"line {lineno}: unrecognized line {line!r}")

    flush()
    _validate(symptoms)
    return Questionnaire(symptoms=tuple(symptoms))


def _validate(symptoms: list[Symptom]) -> None:
    if len(symptoms) != SYMPTOM_COUNT:
        raise QuestionnaireError(
            f"expected {SYMPTOM_COUNT} symptoms, found {len(symptoms)}"
        )
    seen: set[int] = set()
    for s in symptoms:
        if s.index in seen:
            raise QuestionnaireError(f"duplicate symptom index {s.index}")
        seen.add(s.index)
    if seen != set(range(1, SYMPTOM_COUNT + 1)):
        missing = sorted(set(range(1, SYMPTOM_COUNT + 1)) - seen)
        raise QuestionnaireError(
            f"symptom indices must cover 1..{SYMPTOM_COUNT}; missing {missing}"
        )
    for s in symptoms:
        want = expected_option_count(s.index)
        if len(s.options) != want:
            raise QuestionnaireError(
                f"symptom {s.index} has {len(s.options)} options, expected {want}"
            )
    total = sum(len(s.options) for s in symptoms)
    if total != TOTAL_OPTION_COUNT:
        raise QuestionnaireError(
            f"expected {TOTAL_OPTION_COUNT} options overall, found {total}"
        )


def load_questionnaire(path: str | Path) -> Questionnaire:
    """Load and validate a questionnaire file."""
    try:
        content = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise QuestionnaireError(f"cannot read questionnaire file: {exc}") from exc
    return parse_questionnaire(content)


def dump_questionnaire(questionnaire: Questionnaire) -> str:
    """Serialize in the same format parse_questionnaire reads."""
    blocks = []
    for s in sorted(questionnaire.symptoms, key=lambda s: s.index):
        lines = [f"[symptom {s.index}] {s.name}"]
        lines.extend(f"{_OPTION_PREFIX}{o.text}" for o in s.options)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def all_response_options(questionnaire: Questionnaire) -> list[ResponseOption]:
    """Flatten every option, ordered by (symptom_index, option_index)."""
    out: list[ResponseOption] = []
    for s in sorted(questionnaire.symptoms, key=lambda s: s.index):
        out.extend(s.options)
    return out


def default_questionnaire_path() -> Path:
    """Path of the placeholder questionnaire fixture shipped with the package."""
    ref = resources.files("symptom_search").joinpath(
        "data/questionnaire_placeholder.txt"
    )
    return Path(str(ref))
