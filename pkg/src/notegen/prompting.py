"""Prompt assembly under a hard token budget.

The prompt is instructions, then the selected in-context examples, then the
query dialogue and an output cue. Examples are added greedily in selection
order while the rendered prompt stays within the budget, capped at three.
The token counter is pluggable; the default is a deterministic approximation
(whitespace-delimited words plus non-alphanumeric punctuation characters).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .selection import MAX_SHOTS, ICLExample

TokenCounter = Callable[[str], int]

DEFAULT_INSTRUCTION_TEXT = (
    "Write a clinical note for the following doctor-patient dialogue, "
    "using the same section headers and style as the example notes."
)


class PromptError(ValueError):
    pass


class InputTooLong(PromptError):
    """Instructions plus dialogue alone exceed the prompt budget."""


@dataclass(frozen=True)
class TokenBudget:
    """Hard prompt cap: prompt_limit = max_context - reserved_output."""

    max_context: int = 8192
    reserved_output: int = 2000

    def __post_init__(self) -> None:
        if self.max_context <= 0 or self.reserved_output <= 0:
            raise PromptError("budget fields must be positive")
        if self.prompt_limit <= 0:
            raise PromptError("reserved_output leaves no room for the prompt")

    @property
    def prompt_limit(self) -> int:
        return self.max_context - self.reserved_output

    def to_dict(self) -> dict:
        return {
            "max_context": self.max_context,
            "reserved_output": self.reserved_output,
            "prompt_limit": self.prompt_limit,
        }


@dataclass(frozen=True)
class PromptTemplate:
    instruction_text: str = DEFAULT_INSTRUCTION_TEXT
    example_preamble: str = "Example note:"
    example_separator: str = "\n\n"
    input_preamble: str = "Dialogue:"
    output_cue: str = "Note:"

    def to_dict(self) -> dict:
        return {
            "instruction_text": self.instruction_text,
            "example_preamble": self.example_preamble,
            "example_separator": self.example_separator,
            "input_preamble": self.input_preamble,
            "output_cue": self.output_cue,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PromptTemplate":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)


@dataclass(frozen=True)
class GenerationConfig:
    model_id: str = "mock"
    temperature: float = 0.2
    max_output_tokens: int = 2000

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise PromptError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise PromptError("max_output_tokens must be positive")

    def validate_against(self, budget: TokenBudget) -> None:
        if self.max_output_tokens > budget.reserved_output:
            raise PromptError(
                f"max_output_tokens {self.max_output_tokens} exceeds reserved output "
                f"{budget.reserved_output}"
            )

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }


@dataclass
class Prompt:
    text: str
    token_count: int
    included_example_ids: list[str]
    dropped_example_ids: list[str]
    dialogue: str = ""
    system_text: str = ""
    user_text: str = ""
    dialogue_truncated: bool = False


def count_tokens(counter: TokenCounter | None, text: str) -> int:
    """Count tokens with the given counter (default approximate counter)."""
    return (counter or default_token_counter)(text)


def default_token_counter(text: str) -> int:
    """Deterministic approximation: whitespace-delimited words plus
    non-alphanumeric punctuation characters."""
    words = len(text.split())
    punct = sum(1 for ch in text if not ch.isalnum() and not ch.isspace())
    return words + punct


def render_prompt(
    template: PromptTemplate, example_contents: list[str], dialogue: str
) -> tuple[str, str, str]:
    """Render (full_text, system_text, user_text) for the given contents."""
    blocks: list[str] = []
    if example_contents:
        example_blocks = [
            f"{template.example_preamble}\n{content}" for content in example_contents
        ]
        blocks.append(template.example_separator.join(example_blocks))
    blocks.append(f"{template.input_preamble}\n{dialogue}\n\n{template.output_cue}")
    user_text = "\n\n".join(blocks)
    system_text = template.instruction_text
    full = f"{system_text}\n\n{user_text}" if system_text else user_text
    return full, system_text, user_text


def _truncate_dialogue(
    template: PromptTemplate, dialogue: str, budget: TokenBudget, counter: TokenCounter
) -> str | None:
    """Drop whole trailing dialogue lines until the zero-shot render fits."""
    lines = dialogue.split("\n")
    while lines:
        candidate = "\n".join(lines)
        text, _, _ = render_prompt(template, [], candidate)
        if counter(text) <= budget.prompt_limit:
            return candidate
        lines.pop()
    return None


def assemble_prompt(
    template: PromptTemplate,
    examples: list[ICLExample],
    dialogue: str,
    budget: TokenBudget,
    counter: TokenCounter | None = None,
    truncate_dialogue: bool = False,
) -> Prompt:
    """Greedy budgeted assembly.

    Examples are taken in order; the next one is included only if the fully
    rendered prompt stays within budget.prompt_limit, stopping at the first
    overflow (included ids therefore form a prefix of the input order) and at
    three examples. Instructions and the dialogue are always included; if they
    alone overflow, raises InputTooLong unless truncate_dialogue is set, in
    which case trailing dialogue lines are dropped and the prompt is flagged.
    """
    if not dialogue:
        raise PromptError("dialogue must be non-empty")
    count = counter or default_token_counter

    truncated = False
    base_text, _, _ = render_prompt(template, [], dialogue)
    if count(base_text) > budget.prompt_limit:
        if not truncate_dialogue:
            raise InputTooLong(
                f"instructions + dialogue need {count(base_text)} tokens; "
                f"budget is {budget.prompt_limit}"
            )
        trimmed = _truncate_dialogue(template, dialogue, budget, count)
        if trimmed is None:
            raise InputTooLong("dialogue cannot be truncated to fit the budget")
        dialogue = trimmed
        truncated = True

    included: list[ICLExample] = []
    dropped: list[str] = []
    for example in examples:
        if len(included) >= MAX_SHOTS or dropped:
            dropped.append(example.source_example_id)
            continue
        contents = [ex.content for ex in included] + [example.content]
        candidate_text, _, _ = render_prompt(template, contents, dialogue)
        if count(candidate_text) <= budget.prompt_limit:
            included.append(example)
        else:
            dropped.append(example.source_example_id)

    text, system_text, user_text = render_prompt(
        template, [ex.content for ex in included], dialogue
    )
    return Prompt(
        text=text,
        token_count=count(text),
        included_example_ids=[ex.source_example_id for ex in included],
        dropped_example_ids=dropped,
        dialogue=dialogue,
        system_text=system_text,
        user_text=user_text,
        dialogue_truncated=truncated,
    )
