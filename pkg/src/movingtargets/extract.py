"""Target-label extraction from call transcripts.

Two extractors produce comparable label sets per firm-quarter:

- an LLM extractor that sends one prompt per transcript to a chat-completion
  client and parses the structured two-list response, and
- a rule-based baseline that harvests bare financial keywords, deliberately
  ignoring context so that it reproduces the classic shortcomings of
  entity-style extraction (generic fragments, dropped qualifiers).

Label hygiene is shared: labels must be non-empty and free of digits,
percent signs, and currency symbols; per section, labels are normalized
(trimmed, whitespace-collapsed, case-folded) and exact duplicates removed.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol

import requests

from .corpus import ROLE_ANALYST, ROLE_OPERATOR, Transcript, YearQuarter

SECTION_PRESENTATION = "presentation"
SECTION_QA = "analyst_qa"
SECTIONS = (SECTION_PRESENTATION, SECTION_QA)

METHOD_LLM = "llm"
METHOD_BASELINE = "baseline"

VIOLATION_DIGIT = "digit"
VIOLATION_PERCENT = "percent"
VIOLATION_CURRENCY = "currency"
VIOLATION_EMPTY = "empty"
VIOLATION_MALFORMED = "malformed_item"
VIOLATION_INDEX = "index_out_of_range"

_CURRENCY_CHARS = "$€£¥₩¢"
_INPUT_SLOT = "<inputs>earnings-call transcript as indexed JSON dialog</inputs>"


class ExtractionError(Exception):
    """Base class for extraction failures."""


class TransportError(ExtractionError):
    """A retryable transport-level failure while calling the extractor."""


class ResponseFormatError(ExtractionError):
    """The extractor response is not a parseable two-list document."""


class MissingRecordingError(ExtractionError):
    """Offline mode found no recorded response for a prompt."""


class UnextractableError(ExtractionError):
    """Extraction for one firm-quarter failed after all retries."""


@dataclass(frozen=True)
class TargetLabel:
    """One extracted target: a short noun phrase tied to an utterance."""

    text: str
    section: str
    source_index: int


@dataclass(frozen=True)
class TargetSet:
    """Validated, per-section-deduplicated labels for one firm-quarter."""

    firm: str
    period: YearQuarter
    labels: tuple[TargetLabel, ...]
    method: str

    def __post_init__(self) -> None:
        seen: set[tuple[str, str]] = set()
        for label in self.labels:
            if label.section not in SECTIONS:
                raise ValueError(f"unknown section {label.section!r}")
            key = (label.section, normalize_label(label.text))
            if key in seen:
                raise ValueError(f"duplicate label {label.text!r} in {label.section}")
            seen.add(key)

    def section_labels(self, section: str) -> tuple[TargetLabel, ...]:
        return tuple(label for label in self.labels if label.section == section)


def merged_texts(target_set: TargetSet) -> tuple[str, ...]:
    """Union of label texts across sections, presentation first, order kept.

    Sections are scored jointly; the same text appearing in both sections
    collapses to one entry here even though the set stores both labels.
    """

    ordered: dict[str, None] = {}
    for section in SECTIONS:
        for label in target_set.section_labels(section):
            ordered.setdefault(normalize_label(label.text), None)
    return tuple(ordered)


def validate_target_label(text: str) -> list[str]:
    """Return rule violations for a candidate label; empty means valid."""

    violations = []
    if not text.strip():
        violations.append(VIOLATION_EMPTY)
    if any(ch.isdigit() for ch in text):
        violations.append(VIOLATION_DIGIT)
    if "%" in text:
        violations.append(VIOLATION_PERCENT)
    if any(ch in _CURRENCY_CHARS for ch in text):
        violations.append(VIOLATION_CURRENCY)
    return violations


def normalize_label(text: str) -> str:
    return " ".join(text.split()).casefold()


def normalize_and_dedupe(labels: Iterable[TargetLabel]) -> list[TargetLabel]:
    """Normalize label texts and drop per-section exact duplicates.

    The first occurrence wins; the same normalized text may appear in both
    sections since deduplication is per section.
    """

    seen: set[tuple[str, str]] = set()
    result = []
    for label in labels:
        normalized = normalize_label(label.text)
        key = (label.section, normalized)
        if key in seen:
            continue
        seen.add(key)
        result.append(TargetLabel(normalized, label.section, label.source_index))
    return result


@lru_cache(maxsize=1)
def _prompt_template() -> str:
    template = (
        resources.files("movingtargets")
        .joinpath("templates")
        .joinpath("extraction_prompt.txt")
        .read_text(encoding="utf-8")
    )
    if _INPUT_SLOT not in template:
        raise RuntimeError("extraction prompt template is missing its inputs slot")
    return template


def serialize_dialog(transcript: Transcript) -> str:
    """Transcript as an indexed JSON dialog, byte-stable for equal inputs."""

    dialog = [
        {"index": u.index, "speaker": u.speaker, "text": u.text}
        for u in transcript.utterances
    ]
    return json.dumps(dialog, ensure_ascii=False, indent=2)


def build_extraction_prompt(transcript: Transcript) -> str:
    """Render the extraction prompt with the transcript in the inputs slot."""

    filled = "<inputs>" + serialize_dialog(transcript) + "</inputs>"
    return _prompt_template().replace(_INPUT_SLOT, filled)


@dataclass(frozen=True)
class ParsedExtraction:
    target_set: TargetSet
    violations: Counter
    dropped: tuple[str, ...]


def parse_extraction_response(
    raw: str,
    transcript_len: int,
    *,
    firm: str,
    period: YearQuarter,
    method: str = METHOD_LLM,
) -> ParsedExtraction:
    """Parse a two-list extractor response into a validated TargetSet.

    Items that break label rules or carry an out-of-range utterance index
    are dropped and tallied per violation kind rather than repaired.
    """

    text = _strip_code_fences(raw)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ResponseFormatError(f"unparseable response: {exc}") from exc
    if not isinstance(doc, dict):
        raise ResponseFormatError("response root must be an object")
    for section in SECTIONS:
        if section not in doc:
            raise ResponseFormatError(f"missing top-level key {section!r}")
        if not isinstance(doc[section], list):
            raise ResponseFormatError(f"top-level key {section!r} must be a list")

    violations: Counter = Counter()
    dropped = []
    kept: list[TargetLabel] = []
    for section in SECTIONS:
        for item in doc[section]:
            target, index, item_violations = _check_item(item, transcript_len)
            if item_violations:
                violations.update(item_violations)
                dropped.append(target if target is not None else repr(item))
                continue
            kept.append(TargetLabel(target, section, index))

    labels = normalize_and_dedupe(kept)
    target_set = TargetSet(firm=firm, period=period, labels=tuple(labels), method=method)
    return ParsedExtraction(target_set=target_set, violations=violations, dropped=tuple(dropped))


def _check_item(item: object, transcript_len: int) -> tuple[str | None, int, list[str]]:
    if not isinstance(item, dict):
        return None, -1, [VIOLATION_MALFORMED]
    target = item.get("target")
    index = item.get("index")
    if not isinstance(target, str) or not isinstance(index, int) or isinstance(index, bool):
        return target if isinstance(target, str) else None, -1, [VIOLATION_MALFORMED]
    found = validate_target_label(target)
    if not 0 <= index < transcript_len:
        found = found + [VIOLATION_INDEX]
    return target, index, found


def serialize_target_set(target_set: TargetSet) -> str:
    """Serialize a TargetSet back into the two-list response format."""

    doc = {
        section: [
            {"target": label.text, "index": label.source_index}
            for label in target_set.section_labels(section)
        ]
        for section in SECTIONS
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def _strip_code_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z0-9_-]*\s*", "", text)
        text = re.sub(r"\s*```$", "", text)
    return text.strip()


class ExtractorClient(Protocol):
    """Chat-completion client used for target extraction."""

    model_id: str

    def complete(self, prompt: str) -> str: ...


class RecordingStore:
    """Directory of recorded responses keyed by digest of (model, prompt)."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    @staticmethod
    def key(model_id: str, prompt: str) -> str:
        return hashlib.sha256(f"{model_id}\n{prompt}".encode("utf-8")).hexdigest()

    def _path(self, model_id: str, prompt: str) -> Path:
        return self.root / f"{self.key(model_id, prompt)}.txt"

    def get(self, model_id: str, prompt: str) -> str | None:
        path = self._path(model_id, prompt)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, model_id: str, prompt: str, response: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self._path(model_id, prompt)
        path.write_text(response, encoding="utf-8")
        return path


class ReplayExtractorClient:
    """Serves recorded responses only; any miss is an error."""

    def __init__(self, store: RecordingStore, model_id: str) -> None:
        self.store = store
        self.model_id = model_id

    def complete(self, prompt: str) -> str:
        response = self.store.get(self.model_id, prompt)
        if response is None:
            raise MissingRecordingError(
                f"no recorded response for model {self.model_id!r} "
                f"(key {RecordingStore.key(self.model_id, prompt)})"
            )
        return response


class HttpChatCompletionClient:
    """Minimal chat-completion transport against an OpenAI-style endpoint."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model_id = model_id
        self.api_key = api_key
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        try:
            response = self.session.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"extractor request failed: {exc}") from exc
        if response.status_code >= 500:
            raise TransportError(f"extractor endpoint returned {response.status_code}")
        if response.status_code != 200:
            raise ExtractionError(
                f"extractor endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ExtractionError(f"unexpected completion payload: {exc}") from exc


class TokenBucket:
    """Thread-safe token bucket; acquire() blocks until a token is free."""

    def __init__(self, rate: float, capacity: float | None = None) -> None:
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class RateLimitedExtractorClient:
    """Wraps a client so completions draw from a shared token bucket."""

    def __init__(self, client: ExtractorClient, bucket: TokenBucket) -> None:
        self._client = client
        self._bucket = bucket

    @property
    def model_id(self) -> str:
        return self._client.model_id

    def complete(self, prompt: str) -> str:
        self._bucket.acquire()
        return self._client.complete(prompt)


@dataclass(frozen=True)
class LlmExtraction:
    target_set: TargetSet
    violations: Counter
    attempts: int


def extract_targets_llm(
    transcript: Transcript,
    client: ExtractorClient,
    *,
    max_transport_attempts: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmExtraction:
    """Extract targets for one transcript in a single prompt round trip.

    Transport failures are retried up to ``max_transport_attempts`` with
    exponential backoff; a malformed response is retried once, after which
    the firm-quarter is reported unextractable.
    """

    prompt = build_extraction_prompt(transcript)
    transport_attempts = 0
    parse_attempts = 0
    calls = 0
    while True:
        calls += 1
        try:
            raw = client.complete(prompt)
        except TransportError as exc:
            transport_attempts += 1
            if transport_attempts >= max_transport_attempts:
                raise UnextractableError(
                    f"{transcript.firm} {transcript.period}: transport failed "
                    f"after {transport_attempts} attempts"
                ) from exc
            sleep(backoff_base * 2 ** (transport_attempts - 1))
            continue
        try:
            parsed = parse_extraction_response(
                raw, len(transcript), firm=transcript.firm, period=transcript.period
            )
        except ResponseFormatError as exc:
            parse_attempts += 1
            if parse_attempts > 1:
                raise UnextractableError(
                    f"{transcript.firm} {transcript.period}: unparseable response"
                ) from exc
            continue
        return LlmExtraction(
            target_set=parsed.target_set, violations=parsed.violations, attempts=calls
        )


# Keyword heads the baseline treats as targets. The scan is deliberately
# context-free: it keeps at most a leading determiner, so qualified phrases
# like "Data Center revenue" collapse to "revenue" and generic nouns such as
# "year" or "units" surface as targets of their own.
BASELINE_KEYWORDS = frozenset(
    {
        "revenue",
        "revenues",
        "sales",
        "earnings",
        "margin",
        "margins",
        "growth",
        "share",
        "shares",
        "units",
        "year",
        "quarter",
        "guidance",
        "dividend",
        "dividends",
        "backlog",
        "bookings",
        "pricing",
        "demand",
        "profitability",
        "buyback",
        "buybacks",
        "eps",
        "income",
        "costs",
        "expenses",
        "cash",
        "capex",
        "volume",
        "volumes",
        "utilization",
        "range",
    }
)

_DETERMINERS = frozenset({"the", "a", "an", "this", "that", "our"})
_WORD_RE = re.compile(r"[a-z]+")


def qa_start_index(transcript: Transcript) -> int | None:
    """Index of the first Q&A utterance, or None if the call has no Q&A."""

    for utterance in transcript.utterances:
        if utterance.role == ROLE_ANALYST:
            return utterance.index
        if utterance.role == ROLE_OPERATOR and "operator instructions" in utterance.text.lower():
            return utterance.index
    return None


def extract_targets_baseline(transcript: Transcript) -> TargetSet:
    """Harvest keyword-style targets with a shallow, context-free scan."""

    qa_start = qa_start_index(transcript)
    harvested: list[TargetLabel] = []
    for utterance in transcript.utterances:
        if qa_start is not None and utterance.index >= qa_start:
            section = SECTION_QA
        else:
            section = SECTION_PRESENTATION
        words = _WORD_RE.findall(utterance.text.lower())
        for i, word in enumerate(words):
            if word not in BASELINE_KEYWORDS:
                continue
            if i > 0 and words[i - 1] in _DETERMINERS:
                phrase = f"{words[i - 1]} {word}"
            else:
                phrase = word
            if validate_target_label(phrase):
                continue
            harvested.append(TargetLabel(phrase, section, utterance.index))

    labels = normalize_and_dedupe(harvested)
    return TargetSet(
        firm=transcript.firm,
        period=transcript.period,
        labels=tuple(labels),
        method=METHOD_BASELINE,
    )
