"""In-context example selection.

Implements the strategy grid: random vs similarity-ranked selection, note-only
vs dialogue-note-pair content, optional dataset-source filtering, and
k in 0..3. Similarity ranking is cosine over the configured embedder, with a
deterministic tie-break (descending score, then ascending id).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Corpus, Example, Split
from .embedding import Embedder, EmbedderConfig, EmbeddingError, EmbeddingVector, cosine

MAX_SHOTS = 3

PAIR_TEMPLATE = "Dialogue:\n{dialogue}\n\nNote:\n{note}"


class SelectionError(ValueError):
    """Invalid selection configuration or arguments."""


class EmptyPoolError(SelectionError):
    """No candidates remain after filtering while k > 0."""


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str = "similar"  # "random" | "similar"
    k: int = 1
    content_mode: str = "notes_only"  # "notes_only" | "pairs"
    filter_by_source: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.strategy not in ("random", "similar"):
            raise SelectionError(f"unknown strategy {self.strategy!r}")
        if self.content_mode not in ("notes_only", "pairs"):
            raise SelectionError(f"unknown content_mode {self.content_mode!r}")
        if not 0 <= self.k <= MAX_SHOTS:
            raise SelectionError(f"k must be in 0..{MAX_SHOTS}")
        if self.strategy == "random" and self.seed is None:
            raise SelectionError("random strategy requires a seed")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "k": self.k,
            "content_mode": self.content_mode,
            "filter_by_source": self.filter_by_source,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ICLExample:
    """A chosen in-context example; similarity is None under the random strategy."""

    source_example_id: str
    content: str
    similarity: float | None = None


def render_content(example: Example, content_mode: str) -> str:
    if content_mode == "pairs":
        return PAIR_TEMPLATE.format(dialogue=example.dialogue, note=example.note_raw)
    return example.note_raw


def rank_candidates(
    query: EmbeddingVector, candidates: list[tuple[str, EmbeddingVector]]
) -> list[tuple[str, float]]:
    """Order candidates by descending cosine similarity to the query.

    Ties break by ascending id, giving a reproducible total order.
    """
    if not candidates:
        raise SelectionError("candidates must be non-empty")
    if query.is_zero:
        raise EmbeddingError("query embedding is the zero vector")
    scored = [(cid, cosine(query, vec)) for cid, vec in candidates]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def candidate_pool(corpus: Corpus, query: Example, config: SelectionConfig) -> list[Example]:
    """Train examples eligible for selection: never the query itself, and
    source-matching only when the filter is on."""
    pool = [e for e in corpus.split(Split.TRAIN) if e.id != query.id]
    if config.filter_by_source:
        pool = [e for e in pool if e.dataset_source == query.dataset_source]
    return pool


def select_examples(
    corpus: Corpus,
    query: Example,
    config: SelectionConfig,
    embedder: EmbedderConfig | Embedder | None = None,
) -> list[ICLExample]:
    """Choose up to k in-context examples for the query dialogue.

    similar: top-k prefix of the cosine ranking over the pool.
    random: uniform sample without replacement, deterministic under the seed.
    """
    if config.k == 0:
        return []
    pool = candidate_pool(corpus, query, config)
    if not pool:
        detail = " after dataset-source filtering" if config.filter_by_source else ""
        raise EmptyPoolError(f"no candidate examples{detail} for query {query.id!r}")

    if config.strategy == "random":
        rng = random.Random(config.seed)
        ordered = sorted(pool, key=lambda e: e.id)
        chosen = rng.sample(ordered, k=min(config.k, len(ordered)))
        return [
            ICLExample(source_example_id=e.id, content=render_content(e, config.content_mode))
            for e in chosen
        ]

    if embedder is None:
        embedder = EmbedderConfig()
    if isinstance(embedder, EmbedderConfig):
        embedder = Embedder(embedder)
    query_vec = embedder.embed(query.dialogue)
    if query_vec.is_zero:
        raise EmbeddingError(f"query {query.id!r} produced a zero embedding")
    candidates = [(e.id, embedder.embed(e.dialogue)) for e in pool]
    ranking = rank_candidates(query_vec, candidates)
    by_id = {e.id: e for e in pool}
    return [
        ICLExample(
            source_example_id=cid,
            content=render_content(by_id[cid], config.content_mode),
            similarity=score,
        )
        for cid, score in ranking[: config.k]
    ]
