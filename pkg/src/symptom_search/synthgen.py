"""Synthetic query generation.

For every response option of every symptom, a completion model is
prompted for a fixed number of short first-person posts that express
that option without quoting it.  Completions come back as enumerated,
often quoted lists; post-processing splits and cleans them.  Generation
walks all 90 options, survives per-option failures, re-prompts on
shortfalls within a small extra-call budget, and reports counts,
shortfalls, and token usage.  Nothing is deduplicated; exact duplicates
are only counted in the report.
"""
from __future__ import annotations

import logging
import re
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Sequence

from .completion import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
    CompletionClient,
    CompletionError,
    CompletionRequest,
)
from .errors import DataFormatError, ServiceError
from .questionnaire import Questionnaire, ResponseOption, all_response_options

logger = logging.getLogger(__name__)

ORIGIN_ORIGINAL = "original"
ORIGIN_GENERATED = "generated"
ORIGINS = (ORIGIN_ORIGINAL, ORIGIN_GENERATED)

DEFAULT_N_PER_OPTION = 30
DEFAULT_MODEL_NAME = "text-davinci-003"
EXTRA_CALLS_PER_OPTION = 3
DEFAULT_IN_FLIGHT = 4

DEFAULT_PROMPT_TEXT = '''You are asked to come up with a set of "{N}" diverse reddit posts that are examples to the BDI depression questionnaire for the "{symptom}" symptom. For this symptom, the BDI answer of interest is "{item}".
These examples will be given to a ranking model that will compute the similarity between the answer item text and the reddit post.

Here are the requirements:
1. The language used for the reddit posts should be diverse. For example, you should combine descriptions of past experiences with feelings or events.
2. The reddit posts should be in English.
3. The reddit posts should be 2 to 3 sentences long.
4. The reddit posts should provide substantial content to make ranking feasible.
5. The reddit posts should be specific and not just describe general situations, but rather specific personal experiences and self-disclosure.
6. The reddit posts should, as much as possible, not contain the exact words of the BDI item.

List of "{N}" reddit posts:'''

PLACEHOLDERS = ("{N}", "{symptom}", "{item}")
_REQUIREMENT_RE = re.compile(r"^([1-6])\.\s+\S", re.MULTILINE)


class PromptTemplateError(DataFormatError):
    """A prompt template is missing placeholders or the requirement list."""


@dataclass(frozen=True)
class PromptTemplate:
    text: str

    def validate(self) -> None:
        missing = [p for p in PLACEHOLDERS if p not in self.text]
        if missing:
            raise PromptTemplateError(
                f"prompt template lacks placeholder(s): {', '.join(missing)}"
            )
        numbers = {m.group(1) for m in _REQUIREMENT_RE.finditer(self.text)}
        absent = [str(i) for i in range(1, 7) if str(i) not in numbers]
        if absent:
            raise PromptTemplateError(
                f"prompt template lacks requirement line(s): {', '.join(absent)}"
            )


DEFAULT_PROMPT_TEMPLATE = PromptTemplate(DEFAULT_PROMPT_TEXT)


def build_prompt(template: PromptTemplate, n: int, symptom_name: str, option_text: str) -> str:
    """Substitute the three placeholders; every one of them must exist."""
    if n < 1:
        raise DataFormatError(f"n must be >= 1, got {n}")
    template.validate()
    prompt = (
        template.text.replace("{N}", str(n))
        .replace("{symptom}", symptom_name)
        .replace("{item}", option_text)
    )
    return prompt


_ENUMERATION_RE = re.compile(r"^\d+[.)]\s*")
_QUOTE_PAIRS = {'"': '"', "'": "'"}


def postprocess_completion(raw: str) -> list[str]:
    """Split a raw completion into clean texts.

    Per line: strip whitespace, strip one leading enumeration marker
    (digits plus '.' or ')'), strip one matching pair of surrounding
    quotes, and drop anything left empty.  Idempotent on its own output.
    """
    texts: list[str] = []
    for line in raw.split("\n"):
        line = line.strip()
        line = _ENUMERATION_RE.sub("", line, count=1)
        if len(line) >= 2 and line[0] in _QUOTE_PAIRS and line[-1] == _QUOTE_PAIRS[line[0]]:
            line = line[1:-1]
        line = line.strip()
        if line:
            texts.append(line)
    return texts


@dataclass(frozen=True)
class GenerationConfig:
    n_per_option: int = DEFAULT_N_PER_OPTION
    model_name: str = DEFAULT_MODEL_NAME
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    extra_calls_per_option: int = EXTRA_CALLS_PER_OPTION
    in_flight: int = DEFAULT_IN_FLIGHT

    def __post_init__(self) -> None:
        if self.n_per_option < 1:
            raise DataFormatError(f"n_per_option must be >= 1, got {self.n_per_option}")
        if self.in_flight < 1:
            raise DataFormatError(f"in_flight must be >= 1, got {self.in_flight}")
        if self.extra_calls_per_option < 0:
            raise DataFormatError("extra_calls_per_option must be >= 0")


@dataclass(frozen=True)
class QueryText:
    """One query: either a verbatim response option or a generated post."""

    query_id: str
    symptom_index: int
    option_index: int
    origin: str
    text: str

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise DataFormatError(
                f"origin must be one of {ORIGINS}, got {self.origin!r}"
            )
        if not self.query_id or any(c.isspace() for c in self.query_id):
            raise DataFormatError(f"query_id must be a non-empty token, got {self.query_id!r}")
        if not self.text:
            raise DataFormatError(f"query {self.query_id}: empty text")


def original_query_id(symptom_index: int, option_index: int) -> str:
    return f"bdi-{symptom_index:02d}-{option_index}"


def generated_query_id(symptom_index: int, option_index: int, seq: int, n: int) -> str:
    width = max(3, len(str(max(n - 1, 0))))
    return f"gen-{symptom_index:02d}-{option_index}-{seq:0{width}d}"


def original_query_texts(questionnaire: Questionnaire) -> list[QueryText]:
    """The 90 response options themselves, as queries."""
    return [
        QueryText(
            query_id=original_query_id(o.symptom_index, o.option_index),
            symptom_index=o.symptom_index,
            option_index=o.option_index,
            origin=ORIGIN_ORIGINAL,
            text=o.text,
        )
        for o in all_response_options(questionnaire)
    ]


@dataclass(frozen=True)
class OptionGeneration:
    symptom_index: int
    option_index: int
    texts: tuple[str, ...]
    calls: int
    total_tokens: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class GenerationReport:
    requested_n: int
    options: tuple[OptionGeneration, ...]
    skipped_options: int = 0

    @property
    def total_texts(self) -> int:
        return sum(len(o.texts) for o in self.options)

    @property
    def total_calls(self) -> int:
        return sum(o.calls for o in self.options)

    @property
    def total_tokens(self) -> int:
        return sum(o.total_tokens for o in self.options)

    @property
    def shortfalls(self) -> tuple[OptionGeneration, ...]:
        return tuple(o for o in self.options if len(o.texts) < self.requested_n)

    def duplicate_text_count(self) -> int:
        counts = Counter(t for o in self.options for t in o.texts)
        return sum(c - 1 for c in counts.values() if c > 1)


def format_generation_report(report: GenerationReport) -> str:
    lines = [
        f"requested_per_option\t{report.requested_n}",
        f"options_processed\t{len(report.options)}",
        f"options_skipped\t{report.skipped_options}",
        f"texts_total\t{report.total_texts}",
        f"calls_total\t{report.total_calls}",
        f"tokens_total\t{report.total_tokens}",
        f"duplicate_texts\t{report.duplicate_text_count()}",
        f"shortfall_options\t{len(report.shortfalls)}",
    ]
    for o in sorted(report.options, key=lambda o: (o.symptom_index, o.option_index)):
        status = f"error={o.error}" if o.failed else "ok"
        lines.append(
            f"option\t{o.symptom_index}\t{o.option_index}\t"
            f"texts={len(o.texts)}\tcalls={o.calls}\ttokens={o.total_tokens}\t{status}"
        )
    return "\n".join(lines) + "\n"


def _generate_option(
    client: CompletionClient,
    template: PromptTemplate,
    symptom_name: str,
    option: ResponseOption,
    cfg: GenerationConfig,
) -> OptionGeneration:
    prompt = build_prompt(template, cfg.n_per_option, symptom_name, option.text)
    request = CompletionRequest(
        prompt=prompt,
        model=cfg.model_name,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
    )
    texts: list[str] = []
    calls = 0
    tokens = 0
    error: str | None = None
    max_calls = 1 + cfg.extra_calls_per_option
    while len(texts) < cfg.n_per_option and calls < max_calls:
        calls += 1
        try:
            result = client.complete(request)
        except CompletionError as exc:
            error = (
                f"symptom {option.symptom_index} option {option.option_index}: {exc}"
            )
            logger.warning("generation failed for %s", error)
            break
        tokens += result.total_tokens
        texts.extend(postprocess_completion(result.text))
    if error is None and len(texts) < cfg.n_per_option:
        logger.warning(
            "shortfall for symptom %d option %d: %d of %d texts after %d calls",
            option.symptom_index, option.option_index, len(texts), cfg.n_per_option, calls,
        )
    return OptionGeneration(
        symptom_index=option.symptom_index,
        option_index=option.option_index,
        texts=tuple(texts[: cfg.n_per_option]),
        calls=calls,
        total_tokens=tokens,
        error=error,
    )


def generate_dataset(
    questionnaire: Questionnaire,
    client: CompletionClient,
    cfg: GenerationConfig | None = None,
    template: PromptTemplate | None = None,
    skip: Iterable[tuple[int, int]] = (),
    on_option: Callable[[OptionGeneration, list[QueryText]], None] | None = None,
) -> tuple[list[QueryText], GenerationReport]:
    """Generate texts for every response option not in skip.

    A failing option is recorded and generation moves on; only a failure
    of every single option raises.  on_option fires once per finished
    option (under a lock, so it may append to a file), enabling callers
    to persist progress and later resume via skip.
    """
    cfg = cfg or GenerationConfig()
    template = template or DEFAULT_PROMPT_TEMPLATE
    template.validate()
    skip_set = set(skip)
    options = [
        o
        for o in all_response_options(questionnaire)
        if (o.symptom_index, o.option_index) not in skip_set
    ]
    names = {s.index: s.name for s in questionnaire.symptoms}
    results: dict[tuple[int, int], OptionGeneration] = {}
    lock = threading.Lock()

    def run_one(option: ResponseOption) -> None:
        outcome = _generate_option(client, template, names[option.symptom_index], option, cfg)
        queries = _to_query_texts(outcome, cfg.n_per_option)
        with lock:
            results[(option.symptom_index, option.option_index)] = outcome
            if on_option is not None:
                on_option(outcome, queries)

    if cfg.in_flight > 1 and len(options) > 1:
        with ThreadPoolExecutor(max_workers=cfg.in_flight) as pool:
            list(pool.map(run_one, options))
    else:
        for option in options:
            run_one(option)

    ordered = [results[k] for k in sorted(results)]
    report = GenerationReport(
        requested_n=cfg.n_per_option,
        options=tuple(ordered),
        skipped_options=len(skip_set),
    )
    if options and all(o.failed for o in ordered):
        raise ServiceError(
            f"generation failed for every option; first error: {ordered[0].error}"
        )
    queries = [q for o in ordered for q in _to_query_texts(o, cfg.n_per_option)]
    return queries, report


def _to_query_texts(outcome: OptionGeneration, n: int) -> list[QueryText]:
    return [
        QueryText(
            query_id=generated_query_id(outcome.symptom_index, outcome.option_index, i, n),
            symptom_index=outcome.symptom_index,
            option_index=outcome.option_index,
            origin=ORIGIN_GENERATED,
            text=text,
        )
        for i, text in enumerate(outcome.texts)
    ]


# --- query file: query_id, symptom_index, option_index, origin, text ---

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape(text: str) -> str:
    for raw, esc in _ESCAPES.items():
        text = text.replace(raw, esc)
    return text


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text) and text[i + 1] in _UNESCAPES:
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def query_file_line(query: QueryText) -> str:
    return (
        f"{query.query_id}\t{query.symptom_index}\t{query.option_index}\t"
        f"{query.origin}\t{_escape(query.text)}"
    )


def write_query_file(queries: Iterable[QueryText], out: IO[str]) -> None:
    for query in queries:
        out.write(query_file_line(query) + "\n")


def read_query_file(source: IO[str]) -> list[QueryText]:
    queries: list[QueryText] = []
    seen: set[str] = set()
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise DataFormatError(
                f"query file line {lineno}: expected 5 tab-separated fields, "
                f"got {len(fields)}"
            )
        query_id, symptom_str, option_str, origin, text = fields
        try:
            symptom_index = int(symptom_str)
            option_index = int(option_str)
        except ValueError as exc:
            raise DataFormatError(
                f"query file line {lineno}: non-numeric symptom/option index"
            ) from exc
        if query_id in seen:
            raise DataFormatError(
                f"query file line {lineno}: duplicate query_id {query_id!r}"
            )
        seen.add(query_id)
        try:
            queries.append(
                QueryText(
                    query_id=query_id,
                    symptom_index=symptom_index,
                    option_index=option_index,
                    origin=origin,
                    text=_unescape(text),
                )
            )
        except DataFormatError as exc:
            raise DataFormatError(f"query file line {lineno}: {exc}") from exc
    return queries


def validate_queries_against(
    queries: Iterable[QueryText], questionnaire: Questionnaire
) -> None:
    """Every query must reference an existing response option."""
    valid: dict[int, int] = {s.index: len(s.options) for s in questionnaire.symptoms}
    for q in queries:
        count = valid.get(q.symptom_index)
        if count is None:
            raise DataFormatError(
                f"query {q.query_id}: unknown symptom index {q.symptom_index}"
            )
        if not 0 <= q.option_index < count:
            raise DataFormatError(
                f"query {q.query_id}: symptom {q.symptom_index} has no "
                f"option {q.option_index}"
            )
