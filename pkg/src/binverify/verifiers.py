"""Verifier backends: a chat-style HTTP endpoint, a scripted mock and a stochastic simulator.

All three expose the same three calls::

    verify(ClaimQuery)    -> (Verdict, raw_text)
    answer_mcq(McqQuery)  -> (option_index, raw_text)
    complete(prompt, images, temperature, key, repeat) -> raw_text

``complete`` carries free-form requests (open-ended answers, maze paths,
class extraction).
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .errors import BackendError, ConfigurationError, InvalidInputError, UnparseableAnswerError
from .raster import RasterImage, encode_png

log = logging.getLogger(__name__)

CERTAINTY_SUFFIX = "if uncertain, answer False"
DEFAULT_TEMPERATURE = 0.2
VOTE_TEMPERATURE = 1.0


class Verdict(enum.Enum):
    TRUE = "True"
    FALSE = "False"
    UNPARSEABLE = "Unparseable"

    def as_bool(self) -> bool:
        """Unparseable counts as False."""
        return self is Verdict.TRUE


@dataclass(frozen=True)
class ClaimQuery:
    """A single True/False question.

    ``truth`` is hidden ground truth used only by the simulator; ``key``
    identifies the query for scripted fixtures and per-query RNG streams.
    """

    claim_text: str
    images: tuple[RasterImage, ...] = ()
    certainty_policy: bool = False
    temperature: float = DEFAULT_TEMPERATURE
    key: str | None = None
    repeat: int = 0
    truth: bool | None = None

    def __post_init__(self):
        if not self.claim_text or not self.claim_text.strip():
            raise InvalidInputError("claim text is empty")
        object.__setattr__(self, "images", tuple(self.images))

    @property
    def prompt(self) -> str:
        if self.certainty_policy:
            return f"{self.claim_text.rstrip()} Note: {CERTAINTY_SUFFIX}"
        return self.claim_text


MCQ_INSTRUCTION = "Answer with the letter of the single best option."


@dataclass(frozen=True)
class McqQuery:
    stem: str
    options: tuple[str, ...]
    images: tuple[RasterImage, ...] = ()
    temperature: float = DEFAULT_TEMPERATURE
    key: str | None = None
    repeat: int = 0
    answer_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        object.__setattr__(self, "images", tuple(self.images))
        if not self.options:
            raise InvalidInputError("MCQ needs at least one option")
        if len(self.options) > 26:
            raise InvalidInputError("at most 26 options can be lettered")

    @property
    def letters(self) -> list[str]:
        return [chr(ord("A") + i) for i in range(len(self.options))]

    @property
    def prompt(self) -> str:
        lines = [self.stem.rstrip(), "Options:"]
        lines += [f"({letter}) {opt}" for letter, opt in zip(self.letters, self.options)]
        lines.append(MCQ_INSTRUCTION)
        return "\n".join(lines)


@dataclass(frozen=True)
class SimulatorParams:
    q1: float
    q2: float
    p: float
    seed: int = 0

    def __post_init__(self):
        for name in ("q1", "q2", "p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name}={v} outside [0, 1]")


# --------------------------------------------------------------------------
# reply parsing

_WORD = re.compile(r"[a-z]+")


def parse_verdict(raw: str) -> Verdict:
    """Classify a free-text reply as True, False or Unparseable.

    The first word decides when it is "true" or "false"; otherwise the reply
    must mention exactly one of the two words.
    """
    words = _WORD.findall(raw.lower())
    if not words:
        return Verdict.UNPARSEABLE
    if words[0] == "true":
        return Verdict.TRUE
    if words[0] == "false":
        return Verdict.FALSE
    has_t, has_f = "true" in words, "false" in words
    if has_t and not has_f:
        return Verdict.TRUE
    if has_f and not has_t:
        return Verdict.FALSE
    return Verdict.UNPARSEABLE


_ANSWER_LETTER = re.compile(r"\banswer\s*(?:is)?\s*[:\-]?\s*\(?([A-Za-z])\)?(?![A-Za-z])", re.IGNORECASE)
_LEADING_LETTER = re.compile(r"^[\s*\[]*\(?([A-Za-z])(?:\)|[.:\]*]|\s*$)")
_PAREN_LETTER = re.compile(r"\(([A-Z])\)")


def parse_mcq_choice(raw: str, options: Sequence[str]) -> int:
    """Map an MCQ reply to a 0-based option index.

    Tries, in order: "Answer: X", a leading letter, a single "(X)" mention, and a
    unique option-text match. A leading letter is ignored when the reply also
    names a different "(Y)". Raises :class:`UnparseableAnswerError` otherwise.
    """
    n = len(options)
    text = raw.strip()

    def ok(letter: str) -> int | None:
        i = ord(letter.upper()) - ord("A")
        return i if 0 <= i < n else None

    m = _ANSWER_LETTER.search(text)
    if m and ok(m.group(1)) is not None:
        return ok(m.group(1))
    hits = {ok(x) for x in _PAREN_LETTER.findall(text.upper())} - {None}
    m = _LEADING_LETTER.match(text)
    if m and ok(m.group(1)) is not None and hits <= {ok(m.group(1))}:
        return ok(m.group(1))
    if len(hits) == 1:
        return hits.pop()
    low = text.lower()
    matches = [i for i, opt in enumerate(options) if opt and opt.lower() in low]
    if len(matches) == 1:
        return matches[0]
    raise UnparseableAnswerError(f"cannot map reply to one of {n} options", raw)


# --------------------------------------------------------------------------
# scripted mock

Fixture = Mapping[str, Any] | Callable[[Any], Any]


class ScriptedVerifier:
    """Replays canned answers.

    Claim fixtures map a query key (or, failing that, the prompt text) to a
    bool or raw string. MCQ fixtures map to an option index or raw string.
    Completion fixtures map to raw strings. A callable may stand in for any
    mapping; it receives the query.
    """

    def __init__(self, claims: Fixture | None = None, mcq: Fixture | None = None,
                 completions: Fixture | None = None):
        self.claims = claims or {}
        self.mcq = mcq or {}
        self.completions = completions or {}
        self.calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    @staticmethod
    def _lookup(table: Fixture, query, kind: str, key: str | None, prompt: str):
        if callable(table):
            return table(query)
        for k in (key, prompt):
            if k is not None and k in table:
                return table[k]
        raise ConfigurationError(f"no {kind} fixture for key={key!r}")

    def _record(self, kind, key):
        with self._lock:
            self.calls.append((kind, key))

    def verify(self, query: ClaimQuery) -> tuple[Verdict, str]:
        self._record("claim", query.key)
        value = self._lookup(self.claims, query, "claim", query.key, query.prompt)
        raw = ("True" if value else "False") if isinstance(value, bool) else str(value)
        return parse_verdict(raw), raw

    def answer_mcq(self, query: McqQuery) -> tuple[int, str]:
        self._record("mcq", query.key)
        value = self._lookup(self.mcq, query, "mcq", query.key, query.prompt)
        if isinstance(value, int) and not isinstance(value, bool):
            if not 0 <= value < len(query.options):
                raise ConfigurationError(f"mcq fixture index {value} out of range")
            return value, query.letters[value]
        raw = str(value)
        return parse_mcq_choice(raw, query.options), raw

    def complete(self, prompt: str, images: Sequence[RasterImage] = (), temperature: float = DEFAULT_TEMPERATURE,
                 key: str | None = None, repeat: int = 0) -> str:
        self._record("complete", key)
        return str(self._lookup(self.completions, prompt, "completion", key, prompt))


# --------------------------------------------------------------------------
# simulator


class SimulatedVerifier:
    """Noisy verifier driven by hidden ground truth.

    A claim that is true comes back True with probability ``q1``; a false one
    with probability ``q2``. An MCQ returns the correct option with
    probability ``p``, otherwise a uniformly chosen wrong one.

    Each keyed query draws from its own stream seeded by ``(seed, key, repeat)``
    so results do not depend on call order or thread scheduling.
    """

    def __init__(self, params: SimulatorParams):
        self.params = params
        self._shared = random.Random(params.seed)
        self._lock = threading.Lock()

    def _rng(self, kind: str, key: str | None, repeat: int) -> random.Random | None:
        if key is None:
            return None
        return random.Random(f"{self.params.seed}|{kind}|{key}|{repeat}")

    def _uniform(self, rng: random.Random | None) -> float:
        if rng is not None:
            return rng.random()
        with self._lock:
            return self._shared.random()

    def verify(self, query: ClaimQuery) -> tuple[Verdict, str]:
        if query.truth is None:
            raise ConfigurationError("simulator needs ClaimQuery.truth")
        rate = self.params.q1 if query.truth else self.params.q2
        u = self._uniform(self._rng("claim", query.key, query.repeat))
        verdict = Verdict.TRUE if u < rate else Verdict.FALSE
        return verdict, verdict.value

    def answer_mcq(self, query: McqQuery) -> tuple[int, str]:
        n = len(query.options)
        rng = self._rng("mcq", query.key, query.repeat)
        u = self._uniform(rng)
        v = self._uniform(rng)
        ans = query.answer_index
        if ans is None:
            choice = min(int(v * n), n - 1)
        elif u < self.params.p or n == 1:
            choice = ans
        else:
            wrong = [i for i in range(n) if i != ans]
            choice = wrong[min(int(v * len(wrong)), len(wrong) - 1)]
        return choice, query.letters[choice]

    def complete(self, prompt, images=(), temperature=DEFAULT_TEMPERATURE, key=None, repeat=0) -> str:
        raise ConfigurationError("the simulator cannot answer free-form prompts")


# --------------------------------------------------------------------------
# remote chat endpoint


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class HttpVerifier:
    """Chat-completions style JSON-over-HTTP backend with an on-disk response cache.

    The request carries one text part followed by one base64 PNG part per
    image. The bearer token is read from the environment variable named by
    ``api_key_env``. Responses are cached under ``cache_dir`` keyed by the
    endpoint, model, prompt, image bytes, temperature and repeat index.
    """

    def __init__(self, endpoint: str, model: str, *, api_key_env: str = "OPENAI_API_KEY",
                 cache_dir: str | Path | None = None, log_path: str | Path | None = None,
                 timeout: float = 60.0, max_attempts: int = 3, backoff: float = 1.0,
                 parallelism: int = 8, client=None):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.log_path = Path(log_path) if log_path else None
        self.max_attempts = max(1, max_attempts)
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max(1, parallelism))
        self._log_lock = threading.Lock()
        self.network_calls = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def payload(self, prompt: str, images: Sequence[RasterImage], temperature: float) -> dict:
        content: list[dict] = [{"type": "text", "text": prompt}]
        for img in images:
            b64 = base64.b64encode(encode_png(img)).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
        return {"model": self.model, "messages": [{"role": "user", "content": content}],
                "temperature": temperature}

    def cache_key(self, prompt: str, images: Sequence[RasterImage], temperature: float, repeat: int) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([self.endpoint, self.model, prompt, temperature, repeat]).encode())
        for img in images:
            h.update(hashlib.sha256(encode_png(img)).digest())
        return h.hexdigest()

    def _log(self, record: dict) -> None:
        if self.log_path is None:
            return
        line = json.dumps(record, sort_keys=True)
        with self._log_lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    def _chat(self, prompt: str, images: Sequence[RasterImage], temperature: float,
              key: str | None, repeat: int) -> str:
        ckey = self.cache_key(prompt, images, temperature, repeat)
        cpath = self.cache_dir / ckey[:2] / f"{ckey}.json" if self.cache_dir else None
        if cpath is not None and cpath.exists():
            raw = json.loads(cpath.read_text(encoding="utf-8"))["raw"]
            self._log({"key": key, "prompt": prompt, "raw": raw, "cached": True, "temperature": temperature,
                       "repeat": repeat})
            return raw

        body = self.payload(prompt, images, temperature)
        last_exc: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            t0 = time.perf_counter()
            try:
                with self._slots:
                    self.network_calls += 1
                    resp = self._client.post(self.endpoint, json=body, headers=self._headers())
                resp.raise_for_status()
                raw = resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # transport, HTTP status, malformed body
                last_exc = exc
                log.warning("request %s attempt %d failed: %s", key, attempt, exc)
                if attempt < self.max_attempts and self.backoff > 0:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
                continue
            if not isinstance(raw, str):
                raw = json.dumps(raw)
            latency = time.perf_counter() - t0
            if cpath is not None:
                _atomic_write(cpath, json.dumps({"raw": raw, "prompt": prompt}))
            self._log({"key": key, "prompt": prompt, "raw": raw, "cached": False, "temperature": temperature,
                       "repeat": repeat, "attempt": attempt, "latency": round(latency, 6)})
            return raw
        raise BackendError(f"{self.endpoint}: {last_exc}", attempts=self.max_attempts)

    def verify(self, query: ClaimQuery) -> tuple[Verdict, str]:
        raw = self._chat(query.prompt, query.images, query.temperature, query.key, query.repeat)
        return parse_verdict(raw), raw

    def answer_mcq(self, query: McqQuery) -> tuple[int, str]:
        raw = self._chat(query.prompt, query.images, query.temperature, query.key, query.repeat)
        return parse_mcq_choice(raw, query.options), raw

    def complete(self, prompt: str, images: Sequence[RasterImage] = (), temperature: float = DEFAULT_TEMPERATURE,
                 key: str | None = None, repeat: int = 0) -> str:
        return self._chat(prompt, images, temperature, key, repeat)
