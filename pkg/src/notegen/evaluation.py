"""Scoring of generated notes against references.

Native ROUGE-1/2/L over a simple lowercase alphanumeric tokenization, the
aggregate average of ROUGE-1 F1 / BERTScore F1 / BLEURT-20 (neural columns
come from an external scorer, never reimplemented here), per-category scores
over section text grouped by evaluation category, and exact-match header
accuracy.
"""

from __future__ import annotations

import json
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .corpus import (
    EVAL_CATEGORIES,
    Category,
    SectionTaxonomy,
    canonicalize_header,
    parse_note,
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

NEURAL_METRICS = ("bertscore_f1", "bleurt")
ROUGE_COLUMNS = ("rouge1_f1", "rouge2_f1", "rougeL_f1")


class EvaluationError(ValueError):
    pass


class ScorerError(RuntimeError):
    """External scorer transport or protocol failure."""


def simple_stem(token: str) -> str:
    """Tiny suffix stripper used only when stemming is enabled (approximate;
    swap in an exact stemmer for parity with external tooling)."""
    if token.endswith("sses"):
        return token[:-2]
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "i"
    if token.endswith("ing") and len(token) > 5:
        return token[:-3]
    if token.endswith("ed") and len(token) > 4:
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        return token[:-1]
    return token


def tokenize(text: str, stem: bool = False) -> list[str]:
    """Lowercase alphanumeric token runs; punctuation is ignored."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stem:
        tokens = [simple_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @staticmethod
    def from_pr(precision: float, recall: float) -> "RougeScore":
        f1 = 0.0
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        return RougeScore(precision=precision, recall=recall, f1=f1)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(reference: str, hypothesis: str, n: int, stem: bool = False) -> RougeScore:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise EvaluationError("n must be >= 1")
    ref_grams = _ngrams(tokenize(reference, stem), n)
    hyp_grams = _ngrams(tokenize(hypothesis, stem), n)
    ref_total = sum(ref_grams.values())
    hyp_total = sum(hyp_grams.values())
    if ref_total == 0 or hyp_total == 0:
        return RougeScore(precision=0.0, recall=0.0, f1=0.0)
    overlap = sum(min(count, hyp_grams[gram]) for gram, count in ref_grams.items())
    return RougeScore.from_pr(overlap / hyp_total, overlap / ref_total)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(reference: str, hypothesis: str, stem: bool = False) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1 over the same tokenization."""
    ref_tokens = tokenize(reference, stem)
    hyp_tokens = tokenize(hypothesis, stem)
    if not ref_tokens or not hyp_tokens:
        return RougeScore(precision=0.0, recall=0.0, f1=0.0)
    lcs = _lcs_length(ref_tokens, hyp_tokens)
    return RougeScore.from_pr(lcs / len(hyp_tokens), lcs / len(ref_tokens))


def aggregate_score(rouge1_f1: float, bertscore_f1: float, bleurt: float) -> float:
    """Arithmetic mean of the three metric values (consistent scale required)."""
    values = (rouge1_f1, bertscore_f1, bleurt)
    if any(v > 1.5 for v in values) and any(v <= 1.0 for v in values):
        raise EvaluationError(f"mixed metric scales: {values}")
    return sum(values) / 3.0


class StubScorer:
    """Returns fixed values per metric; for tests and dry runs."""

    def __init__(self, values: dict[str, float]):
        self.values = values

    def score(self, metric: str, pairs: list[tuple[str, str]]) -> list[float]:
        if metric not in self.values:
            raise ScorerError(f"stub has no value for metric {metric!r}")
        return [self.values[metric]] * len(pairs)


class HttpScorer:
    """External neural scorer over HTTP.

    Wire contract: POST {metric, pairs: [{reference, hypothesis}, ...]} to the
    endpoint; response {scores: [float, ...]} aligned with the pairs.
    """

    def __init__(self, endpoint: str, session: requests.Session | None = None):
        self.endpoint = endpoint
        self._session = session or requests.Session()

    def score(self, metric: str, pairs: list[tuple[str, str]]) -> list[float]:
        body = {
            "metric": metric,
            "pairs": [{"reference": r, "hypothesis": h} for r, h in pairs],
        }
        try:
            response = self._session.post(self.endpoint, json=body, timeout=300)
        except requests.RequestException as exc:
            raise ScorerError(f"scorer transport failure: {exc}") from exc
        if response.status_code != 200:
            raise ScorerError(f"scorer returned {response.status_code}")
        try:
            scores = response.json()["scores"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerError(f"malformed scorer response: {exc}") from exc
        if len(scores) != len(pairs):
            raise ScorerError(f"expected {len(pairs)} scores, got {len(scores)}")
        return [float(s) for s in scores]


class FileExchangeScorer:
    """File-based scorer handoff: pairs are written to <dir>/<metric>_pairs.jsonl
    and scores are read back from <dir>/<metric>_scores.json."""

    def __init__(self, exchange_dir: str | Path):
        self.exchange_dir = Path(exchange_dir)

    def score(self, metric: str, pairs: list[tuple[str, str]]) -> list[float]:
        self.exchange_dir.mkdir(parents=True, exist_ok=True)
        pairs_path = self.exchange_dir / f"{metric}_pairs.jsonl"
        with pairs_path.open("w", encoding="utf-8") as fh:
            for reference, hypothesis in pairs:
                fh.write(
                    json.dumps({"reference": reference, "hypothesis": hypothesis}) + "\n"
                )
        scores_path = self.exchange_dir / f"{metric}_scores.json"
        if not scores_path.exists():
            raise ScorerError(f"scores file not found: {scores_path}")
        scores = json.loads(scores_path.read_text(encoding="utf-8"))["scores"]
        if len(scores) != len(pairs):
            raise ScorerError(f"expected {len(pairs)} scores, got {len(scores)}")
        return [float(s) for s in scores]


@dataclass
class MetricBlock:
    """Per-example rows plus column means over unrounded values."""

    per_example: list[dict] = field(default_factory=list)
    aggregate: dict[str, float] = field(default_factory=dict)

    def finalize(self) -> None:
        columns: dict[str, list[float]] = {}
        for row in self.per_example:
            for key, value in row.items():
                if key in ("example_id", "flags"):
                    continue
                if value is not None:
                    columns.setdefault(key, []).append(value)
        self.aggregate = {
            key: statistics.fmean(values) for key, values in columns.items() if values
        }


@dataclass
class MetricReport:
    per_example: list[dict] = field(default_factory=list)
    aggregate: dict[str, float] = field(default_factory=dict)
    per_category: dict[str, MetricBlock] = field(default_factory=dict)
    header_accuracy: float | None = None
    annotations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_example": self.per_example,
            "aggregate": self.aggregate,
            "per_category": {
                name: {"per_example": block.per_example, "aggregate": block.aggregate}
                for name, block in self.per_category.items()
            },
            "header_accuracy": self.header_accuracy,
            "annotations": self.annotations,
        }


def _category_text(note_raw: str, taxonomy: SectionTaxonomy) -> dict[Category, str]:
    """Concatenated section text (header line + body) per evaluation category,
    in note order. Headers stay in so that a single-category note scores the
    same per-category as it does full-note. Preamble and unknown-category
    sections are excluded from category scoring.
    """
    note = parse_note(note_raw, taxonomy)
    buckets: dict[Category, list[str]] = {cat: [] for cat in EVAL_CATEGORIES}
    for section in note.sections:
        if section.category in buckets:
            part = section.header_raw
            if section.has_body:
                part = f"{part}\n{section.body}"
            buckets[section.category].append(part)
    return {cat: "\n".join(parts) for cat, parts in buckets.items()}


def _rouge_row(example_id: str, reference: str, hypothesis: str, stem: bool) -> dict:
    row = {
        "example_id": example_id,
        "rouge1_f1": rouge_n(reference, hypothesis, 1, stem).f1,
        "rouge2_f1": rouge_n(reference, hypothesis, 2, stem).f1,
        "rougeL_f1": rouge_l(reference, hypothesis, stem).f1,
        "flags": [],
    }
    if not tokenize(reference) and not tokenize(hypothesis):
        row["flags"].append("degenerate_both_empty")
    return row


def _attach_neural(rows: list[dict], pairs: list[tuple[str, str]], scorer) -> None:
    for metric in NEURAL_METRICS:
        scores = scorer.score(metric, pairs)
        for row, score in zip(rows, scores):
            row[metric] = score
    for row in rows:
        row["average"] = aggregate_score(row["rouge1_f1"], row["bertscore_f1"], row["bleurt"])


def evaluate_run(
    references: dict[str, str],
    hypotheses: dict[str, str],
    taxonomy: SectionTaxonomy | None = None,
    scorer=None,
    stem: bool = False,
) -> MetricReport:
    """Score hypothesis notes against reference notes.

    Every reference id gets a row; a missing hypothesis is scored against the
    empty string and flagged. The average column appears only when a scorer
    supplies both neural metrics; a scorer failure is annotated on the report
    and the neural columns are left absent rather than silently substituted.
    """
    unknown = set(hypotheses) - set(references)
    if unknown:
        raise EvaluationError(f"hypotheses with no reference: {sorted(unknown)}")
    taxonomy = taxonomy or SectionTaxonomy.default()
    report = MetricReport()

    ids = sorted(references)
    full_pairs: list[tuple[str, str]] = []
    for example_id in ids:
        reference = references[example_id]
        hypothesis = hypotheses.get(example_id, "")
        row = _rouge_row(example_id, reference, hypothesis, stem)
        if example_id not in hypotheses:
            row["flags"].append("missing_hypothesis")
        report.per_example.append(row)
        full_pairs.append((reference, hypothesis))

    category_rows: dict[Category, list[dict]] = {cat: [] for cat in EVAL_CATEGORIES}
    category_pairs: dict[Category, list[tuple[str, str]]] = {cat: [] for cat in EVAL_CATEGORIES}
    for example_id in ids:
        ref_by_cat = _category_text(references[example_id], taxonomy)
        hyp_by_cat = _category_text(hypotheses.get(example_id, ""), taxonomy)
        for cat in EVAL_CATEGORIES:
            category_rows[cat].append(
                _rouge_row(example_id, ref_by_cat[cat], hyp_by_cat[cat], stem)
            )
            category_pairs[cat].append((ref_by_cat[cat], hyp_by_cat[cat]))

    if scorer is not None:
        try:
            _attach_neural(report.per_example, full_pairs, scorer)
            for cat in EVAL_CATEGORIES:
                _attach_neural(category_rows[cat], category_pairs[cat], scorer)
        except ScorerError as exc:
            for row in report.per_example:
                for key in (*NEURAL_METRICS, "average"):
                    row.pop(key, None)
            for cat in EVAL_CATEGORIES:
                for row in category_rows[cat]:
                    for key in (*NEURAL_METRICS, "average"):
                        row.pop(key, None)
            report.annotations.append(f"external scorer failed: {exc}")

    block = MetricBlock(per_example=report.per_example)
    block.finalize()
    report.aggregate = block.aggregate
    for cat in EVAL_CATEGORIES:
        cat_block = MetricBlock(per_example=category_rows[cat])
        cat_block.finalize()
        report.per_category[cat.value] = cat_block
    return report


def header_accuracy(predictions: list[str], golds: list[str]) -> float:
    """Exact-match fraction after header canonicalization."""
    if len(predictions) != len(golds):
        raise EvaluationError(
            f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
        )
    if not golds:
        raise EvaluationError("empty inputs")
    matches = sum(
        canonicalize_header(p) == canonicalize_header(g) for p, g in zip(predictions, golds)
    )
    return matches / len(golds)


def format_summary(report: MetricReport) -> str:
    """Human-readable summary; scores in percent with one decimal."""
    lines = ["metric                      value"]
    for key in sorted(report.aggregate):
        lines.append(f"{key:<26}  {report.aggregate[key] * 100:.1f}")
    for name, block in report.per_category.items():
        for key in sorted(block.aggregate):
            lines.append(f"{name + '/' + key:<26}  {block.aggregate[key] * 100:.1f}")
    if report.header_accuracy is not None:
        lines.append(f"{'header_accuracy':<26}  {report.header_accuracy * 100:.1f}")
    for note in report.annotations:
        lines.append(f"note: {note}")
    return "\n".join(lines)
