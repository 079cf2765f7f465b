"""Text-completion clients.

The HTTP client speaks the common completions JSON dialect: POST
{base}/completions with model, prompt, temperature, max_tokens; the
reply carries choices[0].text.  Endpoint and credential come from the
COMPLETIONS_API_BASE and COMPLETIONS_API_KEY environment variables and
are never logged.  Transient failures (transport errors, 429, 5xx) are
retried with exponential backoff; authentication failures are not.

The mock client needs no network and is fully determined by its seed
and the prompt, so test and pipeline output is reproducible byte for
byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests

from .errors import ServiceError

logger = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "COMPLETIONS_API_BASE"
API_KEY_ENV_VAR = "COMPLETIONS_API_KEY"

DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_TOKENS = 1024
DEFAULT_RETRIES = 3
BACKOFF_BASE_SECONDS = 0.5


class CompletionError(ServiceError):
    """The completion service failed."""


class AuthenticationError(CompletionError):
    """The service rejected the credential; retrying cannot help."""


class MalformedResponseError(CompletionError):
    """The service answered, but not in the expected shape."""


class RetryExhaustedError(CompletionError):
    """Transient failures persisted past the retry budget."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS


@dataclass(frozen=True)
class CompletionResult:
    text: str
    total_tokens: int = 0
    retries: int = 0


class CompletionClient(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_AUTH_STATUS = {401, 403}


class HttpCompletionClient:
    """Completions over HTTP with exponential-backoff retries."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        retries: int = DEFAULT_RETRIES,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise CompletionError(
                f"no completion endpoint configured; set {ENDPOINT_ENV_VAR}"
            )
        self._endpoint = endpoint.rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR)
        self.retries = retries
        self.timeout = timeout
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        url = f"{self._endpoint}/completions"

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = BACKOFF_BASE_SECONDS * (2 ** (attempt - 1))
                logger.info("retrying completion call (attempt %d) in %.1fs", attempt + 1, delay)
                self._sleep(delay)
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("completion transport error: %s", type(exc).__name__)
                continue
            if response.status_code in _AUTH_STATUS:
                raise AuthenticationError(
                    f"completion service rejected the credential (HTTP {response.status_code})"
                )
            if response.status_code in _RETRYABLE_STATUS:
                last_error = CompletionError(f"HTTP {response.status_code}")
                logger.warning("completion service answered HTTP %d", response.status_code)
                continue
            if response.status_code != 200:
                raise CompletionError(
                    f"completion service answered HTTP {response.status_code}"
                )
            return self._parse(response, retries_spent=attempt)
        raise RetryExhaustedError(
            f"completion call failed after {self.retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _parse(response: requests.Response, retries_spent: int) -> CompletionResult:
        try:
            body = response.json()
        except (ValueError, json.JSONDecodeError) as exc:
            raise MalformedResponseError(f"response body is not JSON: {exc}") from exc
        try:
            text = body["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                "response JSON lacks choices[0].text"
            ) from exc
        if not isinstance(text, str):
            raise MalformedResponseError("choices[0].text is not a string")
        usage = body.get("usage") or {}
        total_tokens = usage.get("total_tokens", 0)
        if not isinstance(total_tokens, int):
            total_tokens = 0
        return CompletionResult(text=text, total_tokens=total_tokens, retries=retries_spent)


_PROMPT_N_RE = re.compile(r'"(\d+)"')
_PROMPT_SYMPTOM_RE = re.compile(r'for the\s+"(.+?)" symptom', re.DOTALL)
_PROMPT_ITEM_RE = re.compile(r'interest is\s+"(.+?)"\.', re.DOTALL)

_OPENERS = (
    "Last month", "Ever since spring", "These past few weeks", "After my shift yesterday",
    "Since the breakup", "Over winter break", "Right after we moved", "For a while now",
    "Since my lease ended", "Earlier this year",
)
_EVENTS = (
    "my project at work fell apart", "I moved to a city where I know nobody",
    "my best friend stopped calling", "I failed the certification exam twice",
    "my landlord sold the building", "I got passed over for the promotion",
    "my dog had surgery", "I dropped out of the night class",
    "the band I played in broke up", "my hours got cut in half",
)
_STATES = (
    "I keep catching myself staring at the wall instead of doing anything",
    "getting through a single chore feels like wading through wet sand",
    "I cancel plans and then regret it the moment the door closes",
    "my sister says I sound flat on the phone and she is not wrong",
    "I reread the same page four times without taking any of it in",
    "the evenings stretch out and I cannot fill them with anything",
    "I keep snoozing alarms because there is nothing worth getting up for",
    "even cooking, which I used to love, feels like a pointless ritual",
    "I notice myself rehearsing conversations that never happen",
    "weekends feel heavier than the work week ever did",
)
_CLOSERS = (
    "Writing it out here helps more than I expected.",
    "Not sure what changed, but something did.",
    "Has anyone else come out the other side of this?",
    "I have not told anyone at home yet.",
    "Posting this from the parking lot before I lose my nerve.",
    "Maybe naming it is the first step.",
)


@dataclass
class MockCompletionClient:
    """Offline stand-in for the HTTP client.

    Output is a function of (seed, prompt) only, so repeated calls with
    the same prompt return byte-identical text.  texts_per_call pins the
    number of lines per call; call_script, when given, supplies per-call
    line counts (useful for exercising shortfall handling) and falls back
    to the requested count once exhausted.  fail_when triggers an
    injected CompletionError for matching prompts.
    """

    seed: int = 0
    texts_per_call: int | None = None
    call_script: Sequence[int] | None = None
    fail_when: Callable[[str], bool] | None = None
    calls_made: int = 0
    _script: deque[int] = field(default_factory=deque, repr=False)

    def __post_init__(self) -> None:
        if self.call_script is not None:
            self._script = deque(self.call_script)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self.calls_made += 1
        if self.fail_when is not None and self.fail_when(request.prompt):
            raise CompletionError("injected mock failure")
        if self._script:
            count = self._script.popleft()
        elif self.texts_per_call is not None:
            count = self.texts_per_call
        else:
            match = _PROMPT_N_RE.search(request.prompt)
            count = int(match.group(1)) if match else 1

        symptom_match = _PROMPT_SYMPTOM_RE.search(request.prompt)
        symptom = symptom_match.group(1).strip().lower() if symptom_match else "all of it"
        item_match = _PROMPT_ITEM_RE.search(request.prompt)
        item = item_match.group(1) if item_match else ""

        digest = hashlib.sha256(
            f"{self.seed}\x00{request.prompt}".encode("utf-8")
        ).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))

        lines: list[str] = []
        for i in range(count):
            text = self._post(rng, symptom)
            # requirement-conformant: never echo the answer item verbatim
            while text == item:
                text = self._post(rng, symptom)
            lines.append(f'{i + 1}. "{text}"')
        raw = "\n".join(lines)
        total_tokens = len(request.prompt.split()) + len(raw.split())
        return CompletionResult(text=raw, total_tokens=total_tokens)

    @staticmethod
    def _post(rng: random.Random, symptom: str) -> str:
        first = f"{rng.choice(_OPENERS)}, {rng.choice(_EVENTS)}."
        state = rng.choice(_STATES)
        if rng.random() < 0.5:
            second = f"Now {state}, and the {symptom} part of it is hard to put into words."
        else:
            second = f"Since then {state}."
        sentences = [first, second]
        if rng.random() < 0.5:
            sentences.append(rng.choice(_CLOSERS))
        return " ".join(sentences)


def client_from_env(
    retries: int = DEFAULT_RETRIES,
    session: requests.Session | None = None,
) -> HttpCompletionClient:
    """Build the HTTP client from environment configuration."""
    return HttpCompletionClient(retries=retries, session=session)
