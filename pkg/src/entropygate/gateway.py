"""Uniform access to a black-box chat-completions model API.

Three interchangeable backends sit behind one ``invoke`` interface:

* ``HttpBackend``: a live chat-completions-style HTTP endpoint, with the
  image embedded as a base64 data URL, bounded retries with exponential
  backoff + jitter, and the API key read from a named environment
  variable (never from flags or files).
* ``MockBackend``: scripted answers keyed by (question_id, role, ordinal)
  plus rule-based entailment judges (equality, equivalence classes,
  seeded random); drives every offline test.
* ``CachingBackend`` (via ``with_cache``): content-addressed record/replay
  store wrapped around any backend: a hit returns the recorded reply
  byte-identically, a miss delegates and persists atomically.

Requests are semantic (question text + image reference, or an entailment
pair), so each backend renders its own wire format and the cache key is a
digest over the canonical request rather than over transport bytes.

The shipped prompt templates are this package's own defaults; override
them via ``PromptTemplates`` to match any given deployment.
"""

from __future__ import annotations

import base64
import json
import hashlib
import logging
import os
import random
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable

from .clustering import LABEL_ENTAILS, LABEL_NOT_ENTAILS, EntailmentVerdict
from .errors import BackendError, SamplingIncompleteError

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import ImageQuestion

log = logging.getLogger(__name__)

# Request roles; ordinals are unique per (question_id, role).
ROLE_SAMPLE = "sample"
ROLE_BASELINE = "baseline"
ROLE_JUDGE = "judge"
ROLE_GRADE = "grade"

# Rough fallback when the provider returns no usage block: ~4 chars/token
# for text plus a flat allowance per attached image.  Estimates are flagged.
_CHARS_PER_TOKEN = 4
_TOKENS_PER_IMAGE = 765


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for a live chat-completions endpoint."""

    endpoint_url: str
    model_name: str
    api_key_env: str = "ENTROPYGATE_API_KEY"
    max_in_flight: int = 4
    retry_limit: int = 4  # retries after the first try: 4 -> 5 attempts total
    backoff_base_s: float = 0.5
    backoff_cap_s: float = 30.0
    request_timeout_s: float = 120.0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.request_timeout_s <= 0:
            raise ValueError("request_timeout_s must be > 0")


@dataclass(frozen=True)
class PromptTemplates:
    """Prompt text rendered by live backends.  Defaults are ours, not a
    reproduction of any particular deployment's prompts."""

    system: str = "You are assisting with radiological image interpretation."
    answer_user: str = "{question}\nAnswer concisely with a short phrase."
    judge_user: str = (
        "We are evaluating answers to the question: {context}\n"
        "Answer 1: {premise}\n"
        "Answer 2: {hypothesis}\n"
        "Does the meaning of Answer 1 follow from Answer 2's being a full "
        "answer, i.e. does Answer 1 entail Answer 2? Reply with exactly one "
        "word: entailment or no-entailment."
    )
    grade_user: str = (
        "Question: {question}\n"
        "Reference answer: {reference}\n"
        "Candidate answer: {answer}\n"
        "Is the candidate clinically equivalent to the reference as an "
        "answer to the question? Reply with exactly one word: yes or no."
    )


@dataclass(frozen=True)
class ModelRequest:
    """One logical model call, independent of wire format.

    Exactly one shape is populated: an answer request (``question`` +
    optional ``image_ref``), a judge request (``context``/``premise``/
    ``hypothesis``), or a grade request (``question``/``premise`` as
    reference/``hypothesis`` as candidate).  ``ordinal`` is the repeat
    nonce: identical requests with different ordinals are distinct calls.
    """

    question_id: str
    role: str
    ordinal: int
    temperature: float
    question: str | None = None
    image_ref: str | None = None
    context: str | None = None
    premise: str | None = None
    hypothesis: str | None = None


@dataclass(frozen=True)
class ModelReply:
    """Verbatim reply text plus per-call accounting."""

    text: str
    tokens_in: int | None
    tokens_out: int | None
    latency_ms: float
    fingerprint: str
    estimated_tokens: bool = False


@dataclass(frozen=True)
class AnswerSample:
    """One sampled answer to one question, with accounting."""

    question_id: str
    ordinal: int
    text: str
    temperature: float
    tokens_in: int | None
    tokens_out: int | None
    latency_ms: float
    backend_fingerprint: str


@dataclass(frozen=True)
class CacheKey:
    """Content digest identifying one logical model call."""

    digest: str

    @classmethod
    def for_request(cls, model_name: str, request: ModelRequest) -> "CacheKey":
        payload = {"model": model_name, "request": asdict(request)}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return cls(digest=hashlib.sha256(canonical.encode("utf-8")).hexdigest())


class Backend:
    """Minimal backend interface: one synchronous ``invoke`` per request.

    Implementations must be safe to share across threads.
    """

    model_name: str = "backend"
    max_in_flight: int = 1

    def invoke(self, request: ModelRequest) -> ModelReply:  # pragma: no cover
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Verdict parsing
# ---------------------------------------------------------------------------

_ENTAIL_TOKENS = {"entailment", "entails", "entail", "yes", "true"}
_NO_ENTAIL_TOKENS = {
    "no-entailment",
    "no_entailment",
    "noentailment",
    "not-entailment",
    "does-not-entail",
    "no",
    "false",
    "contradiction",
    "neutral",
}


def parse_entailment_reply(text: str) -> str | None:
    """Deterministic parse of a judge reply into an entailment label.

    Rule: strip whitespace and terminal punctuation, casefold, collapse
    internal whitespace to single hyphens, then look the token up in a
    closed set.  Returns ``None`` when the reply is not parseable; callers
    retry and finally fall back to "does-not-entail" (conservative: splits
    rather than merges clusters, raising entropy and favoring rejection).
    """
    token = text.strip().strip(".,;:!?\"'").casefold()
    token = "-".join(token.split())
    if token in _ENTAIL_TOKENS:
        return LABEL_ENTAILS
    if token in _NO_ENTAIL_TOKENS:
        return LABEL_NOT_ENTAILS
    return None


_YES_TOKENS = {"yes", "true", "correct", "equivalent"}
_NO_TOKENS = {"no", "false", "incorrect", "not-equivalent"}


def parse_yes_no_reply(text: str) -> bool | None:
    """Parse a yes/no grading reply; ``None`` when unparseable.

    The whole reply is matched first so that "not equivalent" reads as no;
    failing that, a leading yes/no is honored ("Yes, the answers match.").
    """
    token = text.strip().strip(".,;:!?\"'").casefold()
    token = "-".join(token.split())
    if token in _YES_TOKENS:
        return True
    if token in _NO_TOKENS:
        return False
    words = [part.strip(".,;:!?\"'") for part in token.split("-")]
    if words and words[0] in _YES_TOKENS:
        return True
    if words and words[0] in _NO_TOKENS:
        return False
    return None


# ---------------------------------------------------------------------------
# Live HTTP backend
# ---------------------------------------------------------------------------

# transport(url, headers, payload, timeout) -> (status_code, parsed_json | text)
Transport = Callable[[str, dict, dict, float], tuple[int, object]]

_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    try:
        body = response.json()
    except ValueError:
        body = response.text
    return response.status_code, body


class HttpBackend(Backend):
    """Chat-completions HTTP client with retries and image inlining."""

    def __init__(
        self,
        config: BackendConfig,
        templates: PromptTemplates | None = None,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.templates = templates or PromptTemplates()
        self.model_name = config.model_name
        self.max_in_flight = config.max_in_flight
        self._transport = transport or _requests_transport
        self._sleep = sleep
        self._jitter = random.Random()

    def invoke(self, request: ModelRequest) -> ModelReply:
        payload = self.build_payload(request)
        headers = {"Content-Type": "application/json"}
        api_key = self._api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        attempts = self.config.retry_limit + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self._sleep(self._backoff(attempt))
            started = time.perf_counter()
            try:
                status, body = self._transport(
                    self.config.endpoint_url, headers, payload, self.config.request_timeout_s
                )
            except (ConnectionError, TimeoutError, OSError) as exc:
                last_error = f"transport error: {exc}"
                continue
            latency_ms = (time.perf_counter() - started) * 1000.0
            if status in _RETRYABLE_STATUS:
                last_error = f"HTTP {status}"
                continue
            if status != 200:
                raise BackendError(f"HTTP {status} from {self.config.endpoint_url}: {body}")
            return self._parse_reply(body, request, latency_ms)
        raise BackendError(
            f"request failed after {attempts} attempt(s): {last_error}"
        )

    def _api_key(self) -> str:
        name = self.config.api_key_env
        if not name:
            return ""
        key = os.environ.get(name)
        if key is None:
            raise BackendError(f"API key environment variable {name!r} is not set")
        return key

    def _backoff(self, attempt: int) -> float:
        # full jitter: uniform in (0, min(cap, base * 2^(attempt-1)))
        ceiling = min(self.config.backoff_cap_s, self.config.backoff_base_s * 2 ** (attempt - 1))
        return self._jitter.uniform(0, ceiling)

    def build_payload(self, request: ModelRequest) -> dict:
        t = self.templates
        if request.role in (ROLE_SAMPLE, ROLE_BASELINE):
            content: list | str
            text = t.answer_user.format(question=request.question)
            if request.image_ref:
                content = [
                    {"type": "text", "text": text},
                    {"type": "image_url", "image_url": {"url": _image_data_url(request.image_ref)}},
                ]
            else:
                content = text
        elif request.role == ROLE_JUDGE:
            text = t.judge_user.format(
                context=request.context, premise=request.premise, hypothesis=request.hypothesis
            )
            if request.image_ref:
                content = [
                    {"type": "text", "text": text},
                    {"type": "image_url", "image_url": {"url": _image_data_url(request.image_ref)}},
                ]
            else:
                content = text
        elif request.role == ROLE_GRADE:
            content = t.grade_user.format(
                question=request.question, reference=request.premise, answer=request.hypothesis
            )
        else:
            raise ValueError(f"unknown request role {request.role!r}")
        messages = []
        if t.system:
            messages.append({"role": "system", "content": t.system})
        messages.append({"role": "user", "content": content})
        return {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": request.temperature,
        }

    def _parse_reply(self, body, request: ModelRequest, latency_ms: float) -> ModelReply:
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed completion response: {body!r}")
        usage = body.get("usage") or {}
        tokens_in = usage.get("prompt_tokens")
        tokens_out = usage.get("completion_tokens")
        estimated = False
        if tokens_in is None or tokens_out is None:
            tokens_in = self._estimate_prompt_tokens(request)
            tokens_out = max(1, len(text) // _CHARS_PER_TOKEN)
            estimated = True
        fingerprint = str(body.get("model", self.config.model_name))
        if body.get("system_fingerprint"):
            fingerprint += "@" + str(body["system_fingerprint"])
        return ModelReply(
            text=text,
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            latency_ms=latency_ms,
            fingerprint=fingerprint,
            estimated_tokens=estimated,
        )

    def _estimate_prompt_tokens(self, request: ModelRequest) -> int:
        chars = sum(
            len(part)
            for part in (request.question, request.context, request.premise, request.hypothesis)
            if part
        )
        tokens = max(1, chars // _CHARS_PER_TOKEN)
        if request.image_ref and request.role in (ROLE_SAMPLE, ROLE_BASELINE, ROLE_JUDGE):
            tokens += _TOKENS_PER_IMAGE
        return tokens


def _image_data_url(image_ref: str) -> str:
    """Inline an image as a data URL; pass through refs that already are."""
    if image_ref.startswith("data:"):
        return image_ref
    path = Path(image_ref)
    suffix = path.suffix.lower().lstrip(".") or "png"
    mime = {"jpg": "jpeg", "jpeg": "jpeg", "png": "png", "gif": "gif", "webp": "webp"}.get(
        suffix, "png"
    )
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:image/{mime};base64,{data}"


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

def equality_judge() -> Callable[[str, str], bool]:
    """Entails iff the two texts are identical."""
    return lambda premise, hypothesis: premise == hypothesis


def equivalence_class_judge(classes: list[list[str]]) -> Callable[[str, str], bool]:
    """Entails iff both texts sit in the same listed class.

    Texts not listed anywhere form implicit singleton classes, so they
    entail only exact copies of themselves.
    """
    index: dict[str, int] = {}
    for class_id, members in enumerate(classes):
        for member in members:
            index[member] = class_id

    def rule(premise: str, hypothesis: str) -> bool:
        if premise in index and hypothesis in index:
            return index[premise] == index[hypothesis]
        return premise == hypothesis

    return rule


def seeded_random_judge(seed: int, p_entail: float = 0.5) -> Callable[[str, str], bool]:
    """Deterministic pseudo-random verdict per ordered text pair.

    The verdict is a pure function of (seed, premise, hypothesis), so the
    same pair always judges the same way, while direction and transitivity
    are deliberately not respected.
    """

    def rule(premise: str, hypothesis: str) -> bool:
        digest = hashlib.sha256(f"{seed}\x1f{premise}\x1f{hypothesis}".encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2**64 < p_entail

    return rule


_JUDGE_RULES = {
    "equality": lambda spec: equality_judge(),
    "equivalence-classes": lambda spec: equivalence_class_judge(spec.get("classes", [])),
    "random": lambda spec: seeded_random_judge(
        int(spec.get("seed", 0)), float(spec.get("p_entail", 0.5))
    ),
}


class MockBackend(Backend):
    """Offline backend: scripted completions plus a rule-based judge.

    ``answers`` maps question_id -> role -> list of texts indexed by
    ordinal.  The judge rule is a boolean function of (premise,
    hypothesis); it replies "entailment"/"no-entailment", which the
    documented parse rule maps back to a verdict.  ``grade_replies`` maps
    question_id -> "yes"/"no" for model-judge grading.
    """

    def __init__(
        self,
        answers: dict[str, dict[str, list[str]]] | None = None,
        judge_rule: Callable[[str, str], bool] | None = None,
        grade_replies: dict[str, str] | None = None,
        latency_ms: float = 0.0,
        tokens_in: int = 0,
        tokens_out: int = 0,
        fail: set[tuple[str, str, int]] | None = None,
        model_name: str = "mock",
        max_in_flight: int = 4,
    ):
        self.answers = answers or {}
        self.judge_rule = judge_rule or equality_judge()
        self.grade_replies = grade_replies or {}
        self.latency_ms = latency_ms
        self.tokens_in = tokens_in
        self.tokens_out = tokens_out
        self.fail = fail or set()
        self.model_name = model_name
        self.max_in_flight = max_in_flight
        self.call_count = 0

    @classmethod
    def from_script(cls, script: dict | str | Path, **overrides) -> "MockBackend":
        """Build from the JSON scripting format.

        Schema::

            {
              "latency_ms": 3000.0,          // optional, per call
              "tokens_in": 690,              // optional, per call
              "tokens_out": 43,
              "judge": {"rule": "equality"}  // or "equivalence-classes"
                                             //    {"classes": [["a","b"],["c"]]}
                                             // or "random" {"seed": 1, "p_entail": 0.5}
              "answers": {"q1": {"sample": ["A", ...], "baseline": ["A"]}},
              "grades": {"q1": "yes"}
            }
        """
        if not isinstance(script, dict):
            script = json.loads(Path(script).read_text(encoding="utf-8"))
        judge_spec = script.get("judge", {"rule": "equality"})
        rule_name = judge_spec.get("rule", "equality")
        if rule_name not in _JUDGE_RULES:
            raise ValueError(f"unknown mock judge rule {rule_name!r}")
        kwargs = dict(
            answers=script.get("answers", {}),
            judge_rule=_JUDGE_RULES[rule_name](judge_spec),
            grade_replies=script.get("grades", {}),
            latency_ms=float(script.get("latency_ms", 0.0)),
            tokens_in=int(script.get("tokens_in", 0)),
            tokens_out=int(script.get("tokens_out", 0)),
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def invoke(self, request: ModelRequest) -> ModelReply:
        self.call_count += 1
        if (request.question_id, request.role, request.ordinal) in self.fail:
            raise BackendError(
                f"scripted failure for {(request.question_id, request.role, request.ordinal)}"
            )
        if request.role in (ROLE_SAMPLE, ROLE_BASELINE):
            try:
                text = self.answers[request.question_id][request.role][request.ordinal]
            except (KeyError, IndexError):
                raise BackendError(
                    f"no scripted answer for question {request.question_id!r} "
                    f"role {request.role!r} ordinal {request.ordinal}"
                )
        elif request.role == ROLE_JUDGE:
            entails = self.judge_rule(request.premise or "", request.hypothesis or "")
            text = "entailment" if entails else "no-entailment"
        elif request.role == ROLE_GRADE:
            try:
                text = self.grade_replies[request.question_id]
            except KeyError:
                raise BackendError(
                    f"no scripted grade reply for question {request.question_id!r}"
                )
        else:
            raise ValueError(f"unknown request role {request.role!r}")
        return ModelReply(
            text=text,
            tokens_in=self.tokens_in,
            tokens_out=self.tokens_out,
            latency_ms=self.latency_ms,
            fingerprint=self.model_name,
        )


# ---------------------------------------------------------------------------
# Record/replay cache
# ---------------------------------------------------------------------------

class CachingBackend(Backend):
    """Content-addressed record/replay cache around another backend.

    One JSON file per cache key under ``store_path/<2-hex>/<digest>.json``,
    holding the canonicalized request and the verbatim reply.  Writes go
    through a temp file and ``os.replace`` so concurrent writers can never
    leave a torn entry; a corrupt entry is treated as a miss and replaced.
    Optionally appends one JSON line per call to ``log_path``.

    Note: cache keys cover the logical request (the image *reference*,
    not its bytes); editing an image in place under the same path will
    not invalidate recorded replies.
    """

    def __init__(self, inner: Backend, store_path: str | Path, log_path: str | Path | None = None):
        self.inner = inner
        self.store = Path(store_path)
        self.store.mkdir(parents=True, exist_ok=True)
        self.log_path = Path(log_path) if log_path else None
        self.model_name = inner.model_name
        self.max_in_flight = inner.max_in_flight

    def _entry_path(self, key: CacheKey) -> Path:
        return self.store / key.digest[:2] / f"{key.digest}.json"

    def invoke(self, request: ModelRequest) -> ModelReply:
        key = CacheKey.for_request(self.inner.model_name, request)
        path = self._entry_path(key)
        if path.exists():
            try:
                entry = json.loads(path.read_text(encoding="utf-8"))
                reply = ModelReply(**entry["reply"])
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("corrupt cache entry %s (%s); re-fetching", path, exc)
            else:
                self._log_call(key, request, reply, cached=True)
                return reply
        reply = self.inner.invoke(request)
        self._write_entry(path, key, request, reply)
        self._log_call(key, request, reply, cached=False)
        return reply

    def _write_entry(self, path: Path, key: CacheKey, request: ModelRequest, reply: ModelReply):
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "key": key.digest,
            "model": self.inner.model_name,
            "request": asdict(request),
            "reply": asdict(reply),
        }
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{uuid.uuid4().hex}.tmp")
        tmp.write_text(
            json.dumps(entry, sort_keys=True, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        os.replace(tmp, path)

    def _log_call(self, key: CacheKey, request: ModelRequest, reply: ModelReply, cached: bool):
        if self.log_path is None:
            return
        line = json.dumps(
            {
                "key": key.digest,
                "question_id": request.question_id,
                "role": request.role,
                "ordinal": request.ordinal,
                "cached": cached,
                "latency_ms": reply.latency_ms,
                "tokens_in": reply.tokens_in,
                "tokens_out": reply.tokens_out,
            },
            sort_keys=True,
        )
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")


def with_cache(backend: Backend, store_path: str | Path, log_path: str | Path | None = None) -> CachingBackend:
    """Wrap a backend with the record/replay cache at ``store_path``."""
    return CachingBackend(backend, store_path, log_path)


# ---------------------------------------------------------------------------
# Sampling and judging operations
# ---------------------------------------------------------------------------

def sample_answers(
    backend: Backend,
    item: "ImageQuestion",
    k: int,
    temperature: float,
    role: str = ROLE_SAMPLE,
    max_in_flight: int | None = None,
) -> list[AnswerSample]:
    """Draw k independent answers for one question at the given temperature.

    Requests carry ordinals 0..k-1 so repeated sampling never collapses in
    the cache; calls run with bounded concurrency.  If any call fails
    after the backend's retries, raises ``SamplingIncompleteError``
    listing the missing ordinals and carrying the completed samples.
    """
    if k < 1:
        raise ValueError("invalid sample count")
    workers = max_in_flight if max_in_flight is not None else getattr(backend, "max_in_flight", 1)

    def one(ordinal: int) -> AnswerSample:
        request = ModelRequest(
            question_id=item.id,
            role=role,
            ordinal=ordinal,
            temperature=temperature,
            question=item.question,
            image_ref=item.image_ref,
        )
        reply = backend.invoke(request)
        return AnswerSample(
            question_id=item.id,
            ordinal=ordinal,
            text=reply.text,
            temperature=temperature,
            tokens_in=reply.tokens_in,
            tokens_out=reply.tokens_out,
            latency_ms=reply.latency_ms,
            backend_fingerprint=reply.fingerprint,
        )

    completed: dict[int, AnswerSample] = {}
    missing: list[int] = []
    if workers <= 1 or k == 1:
        for ordinal in range(k):
            try:
                completed[ordinal] = one(ordinal)
            except BackendError:
                missing.append(ordinal)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(one, ordinal): ordinal for ordinal in range(k)}
            for future, ordinal in futures.items():
                try:
                    completed[ordinal] = future.result()
                except BackendError:
                    missing.append(ordinal)
    if missing:
        raise SamplingIncompleteError(item.id, missing, [completed[o] for o in sorted(completed)])
    return [completed[o] for o in range(k)]


def judge_entailment(
    backend: Backend,
    context: str,
    premise: str,
    hypothesis: str,
    premise_index: int = 0,
    hypothesis_index: int = 1,
    question_id: str = "",
    image_ref: str | None = None,
    parse_retries: int = 2,
) -> EntailmentVerdict:
    """Ask the backend whether premise entails hypothesis.

    Judging runs at temperature 0 (the lowest the API supports) for
    determinism.  An unparseable reply is retried with a bumped ordinal
    nonce (so caches don't replay the same bad reply) up to
    ``parse_retries`` times, then conservatively mapped to
    "does-not-entail" with a warning.  Transport failure after the
    backend's retries propagates as ``BackendError``.
    """
    if not premise or not hypothesis:
        raise ValueError("premise and hypothesis must be nonempty")
    reply = None
    tokens_in = 0
    tokens_out = 0
    latency_total = 0.0
    for attempt in range(parse_retries + 1):
        request = ModelRequest(
            question_id=question_id,
            role=ROLE_JUDGE,
            ordinal=attempt,
            temperature=0.0,
            context=context,
            premise=premise,
            hypothesis=hypothesis,
            image_ref=image_ref,
        )
        reply = backend.invoke(request)
        tokens_in += reply.tokens_in or 0
        tokens_out += reply.tokens_out or 0
        latency_total += reply.latency_ms
        label = parse_entailment_reply(reply.text)
        if label is not None:
            break
    else:
        log.warning(
            "unparseable judge reply %r after %d attempt(s); recording does-not-entail",
            reply.text if reply else "",
            parse_retries + 1,
        )
        label = LABEL_NOT_ENTAILS
    return EntailmentVerdict(
        premise_index=premise_index,
        hypothesis_index=hypothesis_index,
        label=label,
        raw_judge_output=reply.text if reply else "",
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        latency_ms=latency_total,
    )


def entailment_judge(
    backend: Backend,
    question_id: str = "",
    image_ref: str | None = None,
    parse_retries: int = 2,
):
    """Bind a backend into the judge-callable shape ``cluster_answers`` takes."""

    def judge(context: str, premise: str, hypothesis: str) -> EntailmentVerdict:
        return judge_entailment(
            backend,
            context,
            premise,
            hypothesis,
            question_id=question_id,
            image_ref=image_ref,
            parse_retries=parse_retries,
        )

    return judge


# ---------------------------------------------------------------------------
# Cost and latency accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostEstimate:
    """Token, cost, and latency accounting for one question's pipeline."""

    price_per_million_tokens: float
    sampling_tokens: int
    entailment_tokens: int
    sampling_cost: float
    entailment_cost: float
    total_cost: float
    mean_call_latency_ms: float
    pipeline_latency_ms: float  # two fully parallelized stages
    incomplete_records: int  # records missing token counts, costed as zero


def account_usage(
    samples: list[AnswerSample],
    verdicts: list[EntailmentVerdict],
    price_per_million_tokens: float = 10.0,
) -> CostEstimate:
    """Cost and latency model for the sampling + entailment pipeline.

    Cost is total tokens (in + out) times the flat per-million price,
    split into the sampling and entailment components.  Records missing
    token counts are costed as zero and counted in ``incomplete_records``
    with a warning.  Latency: both stages parallelize fully, so the
    pipeline estimate is twice the mean single-call latency.
    """
    incomplete = 0

    def tokens(records, get_in, get_out) -> int:
        nonlocal incomplete
        total = 0
        for record in records:
            t_in, t_out = get_in(record), get_out(record)
            if t_in is None or t_out is None:
                incomplete += 1
                continue
            total += t_in + t_out
        return total

    sampling_tokens = tokens(samples, lambda s: s.tokens_in, lambda s: s.tokens_out)
    entailment_tokens = tokens(verdicts, lambda v: v.tokens_in, lambda v: v.tokens_out)
    if incomplete:
        log.warning("%d record(s) missing token counts; costed as zero", incomplete)

    price = price_per_million_tokens / 1e6
    latencies = [s.latency_ms for s in samples] + [v.latency_ms for v in verdicts]
    mean_latency = sum(latencies) / len(latencies) if latencies else 0.0
    return CostEstimate(
        price_per_million_tokens=price_per_million_tokens,
        sampling_tokens=sampling_tokens,
        entailment_tokens=entailment_tokens,
        sampling_cost=sampling_tokens * price,
        entailment_cost=entailment_tokens * price,
        total_cost=(sampling_tokens + entailment_tokens) * price,
        mean_call_latency_ms=mean_latency,
        pipeline_latency_ms=2.0 * mean_latency,
        incomplete_records=incomplete,
    )
