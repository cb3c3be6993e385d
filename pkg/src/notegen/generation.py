"""Prompt execution against pluggable completion backends.

Backends: a remote chat-completion client, and two deterministic mocks that
let the whole pipeline run offline (nearest-note returns the note of the most
similar train dialogue; canned returns a fixed text). run_batch executes a
split with bounded parallelism and per-example retries, collecting results in
corpus order regardless of completion order.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import requests

from .corpus import Corpus, Example, Split
from .embedding import Embedder, EmbedderConfig, cosine
from .prompting import (
    GenerationConfig,
    Prompt,
    PromptTemplate,
    TokenBudget,
    TokenCounter,
    assemble_prompt,
)
from .selection import SelectionConfig, select_examples


class BackendError(RuntimeError):
    """Base class for completion backend failures."""


class TransientBackendError(BackendError):
    """Retryable failure: transport error, rate limit, or 5xx status."""


class ProtocolError(BackendError):
    """Non-retryable failure: the response body does not match the contract."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        return self.base_backoff * (2 ** (attempt - 1))


@dataclass(frozen=True)
class BackendDescriptor:
    """Backend selection: remote_chat, mock_nearest_note, or mock_canned."""

    kind: str = "mock_nearest_note"
    endpoint: str = ""
    model: str = ""
    token_env: str = "NOTEGEN_API_TOKEN"
    canned_text: str = "CHIEF COMPLAINT\nNot available."
    message_framing: str = "split"  # "split": system+user; "single": one user message
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        if self.kind not in ("remote_chat", "mock_nearest_note", "mock_canned"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote_chat" and not self.endpoint:
            raise ValueError("remote_chat backend requires an endpoint")
        if self.message_framing not in ("split", "single"):
            raise ValueError(f"unknown message framing {self.message_framing!r}")

    @property
    def backend_id(self) -> str:
        return f"{self.kind}:{self.model}" if self.model else self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model": self.model,
            "token_env": self.token_env,
            "canned_text": self.canned_text,
            "message_framing": self.message_framing,
            "retry": {"max_attempts": self.retry.max_attempts, "base_backoff": self.retry.base_backoff},
        }


class MockCannedBackend:
    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor

    def complete(self, prompt: Prompt, config: GenerationConfig) -> str:
        return self.descriptor.canned_text


class MockNearestNoteBackend:
    """Returns the note of the train example whose dialogue is most similar to
    the prompt's query dialogue (cosine under the configured embedder, ties by
    ascending id). Pure and deterministic: reruns reproduce outputs exactly."""

    def __init__(
        self,
        descriptor: BackendDescriptor,
        train_examples: list[Example],
        embedder: EmbedderConfig | Embedder | None = None,
    ):
        if not train_examples:
            raise ValueError("mock_nearest_note needs a non-empty train pool")
        self.descriptor = descriptor
        if embedder is None:
            embedder = EmbedderConfig()
        self._embedder = Embedder(embedder) if isinstance(embedder, EmbedderConfig) else embedder
        self._train = sorted(train_examples, key=lambda e: e.id)
        self._vectors = [(e, self._embedder.embed(e.dialogue)) for e in self._train]

    def complete(self, prompt: Prompt, config: GenerationConfig) -> str:
        if not prompt.dialogue:
            raise ProtocolError("prompt carries no dialogue for nearest-note lookup")
        query = self._embedder.embed(prompt.dialogue)
        scored = [(cosine(query, vec), e) for e, vec in self._vectors]
        scored.sort(key=lambda item: (-item[0], item[1].id))
        return scored[0][1].note_raw


class RemoteChatBackend:
    """Chat-completion client.

    Wire contract: POST {model, messages, temperature, max_tokens}; the
    completion is read from choices[0].message.content. Temperature and
    max_output_tokens are sent exactly as configured. The bearer token comes
    from the environment variable named in the descriptor.
    """

    def __init__(self, descriptor: BackendDescriptor, session: requests.Session | None = None):
        self.descriptor = descriptor
        self._session = session or requests.Session()

    def _messages(self, prompt: Prompt) -> list[dict[str, str]]:
        if self.descriptor.message_framing == "split" and prompt.system_text:
            return [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ]
        return [{"role": "user", "content": prompt.text}]

    def complete(self, prompt: Prompt, config: GenerationConfig) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.descriptor.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.descriptor.model or config.model_id,
            "messages": self._messages(prompt),
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        try:
            response = self._session.post(
                self.descriptor.endpoint, json=body, headers=headers, timeout=120
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"backend returned {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"backend returned {response.status_code}: {response.text[:200]}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError("completion content is not a string")
        return content


def build_backend(
    descriptor: BackendDescriptor,
    corpus: Corpus | None = None,
    embedder: EmbedderConfig | Embedder | None = None,
):
    if descriptor.kind == "mock_canned":
        return MockCannedBackend(descriptor)
    if descriptor.kind == "mock_nearest_note":
        if corpus is None:
            raise ValueError("mock_nearest_note requires the corpus")
        return MockNearestNoteBackend(descriptor, corpus.split(Split.TRAIN), embedder)
    return RemoteChatBackend(descriptor)


def complete_with_retry(
    backend,
    prompt: Prompt,
    config: GenerationConfig,
    policy: RetryPolicy,
    sleep: Callable[[float], None] | None = None,
) -> tuple[str, int]:
    """Run one completion with retries on transient failures.

    Returns (text, attempt_count). Backoff delays are non-decreasing.
    """
    sleep = sleep if sleep is not None else time.sleep
    last_error: Exception | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return backend.complete(prompt, config), attempt
        except TransientBackendError as exc:
            last_error = exc
            if attempt < policy.max_attempts:
                sleep(policy.delay(attempt))
    raise BackendError(
        f"completion failed after {policy.max_attempts} attempt(s): {last_error}"
    ) from last_error


def complete(backend, prompt: Prompt, config: GenerationConfig) -> str:
    """Execute one prompt, honoring the backend's retry policy."""
    policy = getattr(getattr(backend, "descriptor", None), "retry", RetryPolicy())
    text, _ = complete_with_retry(backend, prompt, config, policy)
    return text


@dataclass
class GeneratedNote:
    example_id: str
    text: str
    backend_id: str
    config_snapshot: GenerationConfig
    included_example_ids: list[str]
    prompt_tokens: int
    latency_ms: float
    attempt_count: int


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the per-example select -> prompt -> complete chain needs."""

    selection: SelectionConfig = field(default_factory=SelectionConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    template: PromptTemplate = field(default_factory=PromptTemplate)
    budget: TokenBudget = field(default_factory=TokenBudget)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    backend: BackendDescriptor = field(default_factory=BackendDescriptor)
    truncate_dialogue: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        self.generation.validate_against(self.budget)

    def to_dict(self) -> dict:
        return {
            "selection": self.selection.to_dict(),
            "embedder": self.embedder.to_dict(),
            "template": self.template.to_dict(),
            "budget": self.budget.to_dict(),
            "generation": self.generation.to_dict(),
            "backend": self.backend.to_dict(),
            "truncate_dialogue": self.truncate_dialogue,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        budget = data.get("budget", {})
        return cls(
            selection=SelectionConfig(**data.get("selection", {})),
            embedder=EmbedderConfig(**data.get("embedder", {})),
            template=PromptTemplate.from_dict(data.get("template", {})),
            budget=TokenBudget(
                max_context=budget.get("max_context", 8192),
                reserved_output=budget.get("reserved_output", 2000),
            ),
            generation=GenerationConfig(**data.get("generation", {})),
            backend=_descriptor_from_dict(data.get("backend", {})),
            truncate_dialogue=data.get("truncate_dialogue", False),
            seed=data.get("seed", 0),
        )


def _descriptor_from_dict(data: dict) -> BackendDescriptor:
    retry = data.get("retry", {})
    known = {
        k: data[k]
        for k in ("kind", "endpoint", "model", "token_env", "canned_text", "message_framing")
        if k in data
    }
    return BackendDescriptor(
        retry=RetryPolicy(
            max_attempts=retry.get("max_attempts", 3),
            base_backoff=retry.get("base_backoff", 1.0),
        ),
        **known,
    )


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    seed: int
    split: str
    started_at: str
    finished_at: str = ""
    succeeded: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "split": self.split,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "succeeded": self.succeeded,
            "failures": self.failures,
        }


def _run_one(
    example: Example,
    corpus: Corpus,
    config: PipelineConfig,
    backend,
    embedder: Embedder,
    counter: TokenCounter | None,
) -> GeneratedNote:
    started = time.perf_counter()
    examples = select_examples(corpus, example, config.selection, embedder)
    prompt = assemble_prompt(
        config.template,
        examples,
        example.dialogue,
        config.budget,
        counter,
        truncate_dialogue=config.truncate_dialogue,
    )
    text, attempts = complete_with_retry(backend, prompt, config.generation, config.backend.retry)
    return GeneratedNote(
        example_id=example.id,
        text=text,
        backend_id=config.backend.backend_id,
        config_snapshot=config.generation,
        included_example_ids=prompt.included_example_ids,
        prompt_tokens=prompt.token_count,
        latency_ms=(time.perf_counter() - started) * 1000.0,
        attempt_count=attempts,
    )


def run_batch(
    corpus: Corpus,
    split: Split | str,
    config: PipelineConfig,
    parallelism: int = 1,
    backend=None,
    counter: TokenCounter | None = None,
) -> tuple[list[GeneratedNote], RunManifest]:
    """Generate a note for every example in the split.

    Output order matches corpus order regardless of completion order. A
    per-example failure is recorded in the manifest and the batch continues;
    the batch itself fails only if every example fails.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    split = Split(split)
    targets = corpus.split(split)
    manifest = RunManifest(
        config=config.to_dict(),
        config_hash=config_hash(config),
        seed=config.seed,
        split=split.value,
        started_at=datetime.now(timezone.utc).isoformat(),
    )
    embedder = Embedder(config.embedder)
    if backend is None:
        backend = build_backend(config.backend, corpus, embedder)

    results: list[GeneratedNote | None] = [None] * len(targets)
    errors: list[dict] = []

    def work(index: int) -> None:
        example = targets[index]
        try:
            results[index] = _run_one(example, corpus, config, backend, embedder, counter)
        except Exception as exc:  # recorded, batch continues
            errors.append({"example_id": example.id, "error": f"{type(exc).__name__}: {exc}"})

    if parallelism == 1 or len(targets) <= 1:
        for i in range(len(targets)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(work, range(len(targets))))

    notes = [note for note in results if note is not None]
    errors.sort(key=lambda item: item["example_id"])
    manifest.failures = errors
    manifest.succeeded = len(notes)
    manifest.finished_at = datetime.now(timezone.utc).isoformat()
    if targets and not notes:
        raise BackendError(f"all {len(targets)} examples failed; first: {errors[0]['error']}")
    return notes, manifest


def replay_run(
    corpus: Corpus, manifest: RunManifest | dict, parallelism: int = 1
) -> tuple[list[GeneratedNote], RunManifest]:
    """Re-execute a run from its manifest (exact reproduction under mock backends)."""
    data = manifest.to_dict() if isinstance(manifest, RunManifest) else manifest
    config = PipelineConfig.from_dict(data["config"])
    return run_batch(corpus, data["split"], config, parallelism=parallelism)
