"""Command-line entry point.

Subcommands cover the whole workflow: corpus ingest/validation, selection
audit dumps, the generate-repair-evaluate pipeline, the ablation grid,
fine-tune data export, and blinded-study management. One --seed flag fans out
to every stochastic component through domain-separated derived seeds.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from .ablation import format_ablation_table, run_ablation, save_ablation_table
from .corpus import (
    CorpusLoadError,
    SectionTaxonomy,
    TaxonomyError,
    load_corpus,
    parse_note,
    save_corpus,
    serialize_note,
)
from .embedding import Embedder, EmbedderConfig
from .evaluation import HttpScorer, evaluate_run, format_summary
from .finetune import export_finetune_data
from .generation import (
    BackendDescriptor,
    PipelineConfig,
    config_hash,
    run_batch,
)
from .humaneval import (
    AnnotationRecord,
    StudyStore,
    create_study,
    format_results_table,
    record_annotation,
    unblind_and_tally,
    win_rate,
)
from .postprocess import repair_headers
from .prompting import GenerationConfig, PromptTemplate, TokenBudget, assemble_prompt
from .selection import SelectionConfig, rank_candidates, select_examples
from .synthetic import make_synthetic_corpus


def derive_seed(master: int, domain: str) -> int:
    """Stable 64-bit seed for one component, decoupled from the others."""
    digest = hashlib.sha256(f"{master}:{domain}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _load_taxonomy(path: str | None) -> SectionTaxonomy:
    return SectionTaxonomy.from_file(path) if path else SectionTaxonomy.default()


def _load_template(path: str | None) -> PromptTemplate:
    if not path:
        return PromptTemplate()
    return PromptTemplate.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fail(stage: str, exc: Exception) -> None:
    click.echo(f"error in stage {stage}: {exc}", err=True)
    sys.exit(1)


def _build_pipeline_config(
    strategy: str,
    shots: int,
    content_mode: str,
    filter_source: bool,
    backend: str,
    endpoint: str,
    model: str,
    seed: int,
    template_path: str | None,
) -> PipelineConfig:
    return PipelineConfig(
        selection=SelectionConfig(
            strategy=strategy,
            k=shots,
            content_mode=content_mode,
            filter_by_source=filter_source,
            seed=derive_seed(seed, "selection"),
        ),
        embedder=EmbedderConfig(),
        template=_load_template(template_path),
        budget=TokenBudget(),
        generation=GenerationConfig(model_id=model or "mock"),
        backend=BackendDescriptor(kind=backend, endpoint=endpoint, model=model),
        seed=seed,
    )


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


@click.group()
def main() -> None:
    """Clinical note generation pipeline and evaluation tools."""


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path(), help="Re-emit as normalized JSONL.")
def ingest(corpus_path: str, taxonomy_path: str | None, out_path: str | None) -> None:
    """Load and validate a corpus; print split and source counts."""
    try:
        corpus = load_corpus(corpus_path, _load_taxonomy(taxonomy_path))
    except (CorpusLoadError, TaxonomyError) as exc:
        _fail("ingest", exc)
        return
    click.echo(f"examples: {len(corpus.examples)}")
    click.echo(f"splits: {json.dumps(corpus.split_counts, sort_keys=True)}")
    click.echo(f"sources: {json.dumps(corpus.source_counts, sort_keys=True)}")
    if out_path:
        save_corpus(corpus, out_path)
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--train", default=67, type=int)
@click.option("--validation", default=20, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth(train: int, validation: int, seed: int, out_path: str) -> None:
    """Write a deterministic synthetic corpus (offline stand-in for real data)."""
    corpus = make_synthetic_corpus(n_train=train, n_validation=validation, seed=seed)
    save_corpus(corpus, out_path)
    click.echo(f"wrote {len(corpus.examples)} examples to {out_path}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--split", default="validation")
@click.option("--out", "out_dir", required=True, type=click.Path())
def rank(corpus_path: str, taxonomy_path: str | None, split: str, out_dir: str) -> None:
    """Dump the full ranked candidate list per query, for audit."""
    try:
        corpus = load_corpus(corpus_path, _load_taxonomy(taxonomy_path))
        embedder = Embedder(EmbedderConfig())
        train = corpus.split("train")
        if not train:
            raise CorpusLoadError("no train examples to rank against")
        vectors = [(e.id, embedder.embed(e.dialogue)) for e in sorted(train, key=lambda e: e.id)]
        rows = []
        for query in corpus.split(split):
            candidates = [(cid, vec) for cid, vec in vectors if cid != query.id]
            ranking = rank_candidates(embedder.embed(query.dialogue), candidates)
            rows.append(
                {
                    "query_id": query.id,
                    "candidates": [{"id": cid, "score": score} for cid, score in ranking],
                }
            )
        out = Path(out_dir) / "rankings.jsonl"
        _write_jsonl(out, rows)
        click.echo(f"wrote {out}")
    except Exception as exc:
        _fail("rank", exc)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Full pipeline config file (overrides the individual flags).")
@click.option("--split", default="validation")
@click.option("--strategy", default="similar", type=click.Choice(["random", "similar"]))
@click.option("--shots", default=3, type=int)
@click.option("--content-mode", default="notes_only", type=click.Choice(["notes_only", "pairs"]))
@click.option("--filter-source", is_flag=True, default=False)
@click.option("--backend", default="mock_nearest_note",
              type=click.Choice(["remote_chat", "mock_nearest_note", "mock_canned"]))
@click.option("--endpoint", default="")
@click.option("--model", default="")
@click.option("--scorer", "scorer_endpoint", default="")
@click.option("--template", "template_path", default=None, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--parallelism", default=1, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--dry-run", is_flag=True, default=False,
              help="Render and dump prompts without calling any backend.")
def pipeline(
    corpus_path: str,
    taxonomy_path: str | None,
    config_path: str | None,
    split: str,
    strategy: str,
    shots: int,
    content_mode: str,
    filter_source: bool,
    backend: str,
    endpoint: str,
    model: str,
    scorer_endpoint: str,
    template_path: str | None,
    seed: int,
    parallelism: int,
    out_dir: str,
    dry_run: bool,
) -> None:
    """Run select -> prompt -> generate -> repair -> evaluate on one split."""
    out = Path(out_dir)
    try:
        taxonomy = _load_taxonomy(taxonomy_path)
        corpus = load_corpus(corpus_path, taxonomy)
    except (CorpusLoadError, TaxonomyError) as exc:
        _fail("load", exc)
        return
    try:
        if config_path:
            config = PipelineConfig.from_dict(
                json.loads(Path(config_path).read_text(encoding="utf-8"))
            )
        else:
            config = _build_pipeline_config(
                strategy, shots, content_mode, filter_source, backend, endpoint, model,
                seed, template_path,
            )
    except Exception as exc:
        _fail("config", exc)
        return

    try:
        embedder = Embedder(config.embedder)
        prompt_rows = []
        for query in corpus.split(split):
            examples = select_examples(corpus, query, config.selection, embedder)
            prompt = assemble_prompt(
                config.template, examples, query.dialogue, config.budget,
                truncate_dialogue=config.truncate_dialogue,
            )
            prompt_rows.append(
                {
                    "example_id": query.id,
                    "token_count": prompt.token_count,
                    "included_example_ids": prompt.included_example_ids,
                    "dropped_example_ids": prompt.dropped_example_ids,
                    "text": prompt.text,
                }
            )
        _write_jsonl(out / "prompts" / "prompts.jsonl", prompt_rows)
    except Exception as exc:
        _fail("prompt", exc)
        return
    if dry_run:
        click.echo(f"wrote {out / 'prompts' / 'prompts.jsonl'} (dry run, no backend called)")
        return

    try:
        notes, manifest = run_batch(corpus, split, config, parallelism=parallelism)
    except Exception as exc:
        _fail("generate", exc)
        return

    try:
        ref = config_hash(config)
        note_rows = []
        repair_rows = []
        hypotheses = {}
        for note in notes:
            parsed = parse_note(note.text, taxonomy)
            repaired, repairs = repair_headers(parsed, taxonomy)
            repaired_text = serialize_note(repaired)
            hypotheses[note.example_id] = repaired_text
            note_rows.append(
                {"example_id": note.example_id, "note": repaired_text, "manifest_ref": ref}
            )
            for repair in repairs:
                repair_rows.append(
                    {
                        "example_id": note.example_id,
                        "original": repair.original,
                        "replacement": repair.replacement,
                        "similarity": repair.similarity,
                    }
                )
        _write_jsonl(out / "notes" / "notes.jsonl", note_rows)
        _write_jsonl(out / "repairs" / "repairs.jsonl", repair_rows)
        (out / "manifest.json").parent.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(
            json.dumps(manifest.to_dict(), indent=2), encoding="utf-8"
        )
    except Exception as exc:
        _fail("repair", exc)
        return

    try:
        references = {e.id: e.note_raw for e in corpus.split(split)}
        scorer = HttpScorer(scorer_endpoint) if scorer_endpoint else None
        report = evaluate_run(references, hypotheses, taxonomy, scorer=scorer)
        reports_dir = out / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        (reports_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        (reports_dir / "summary.txt").write_text(format_summary(report) + "\n", encoding="utf-8")
    except Exception as exc:
        _fail("evaluate", exc)
        return

    click.echo(f"generated {len(notes)} notes; {len(manifest.failures)} failure(s)")
    click.echo(format_summary(report))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--split", default="validation")
@click.option("--backend", default="mock_nearest_note",
              type=click.Choice(["remote_chat", "mock_nearest_note", "mock_canned"]))
@click.option("--endpoint", default="")
@click.option("--model", default="")
@click.option("--seed", default=0, type=int)
@click.option("--parallelism", default=1, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def ablation(
    corpus_path: str,
    taxonomy_path: str | None,
    split: str,
    backend: str,
    endpoint: str,
    model: str,
    seed: int,
    parallelism: int,
    out_dir: str,
) -> None:
    """Run the strategy x mode x filter x shots grid and tabulate scores."""
    try:
        corpus = load_corpus(corpus_path, _load_taxonomy(taxonomy_path))
        base = _build_pipeline_config(
            "similar", 1, "notes_only", False, backend, endpoint, model, seed, None
        )
        table = run_ablation(corpus, base, split=split, parallelism=parallelism)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_ablation_table(table, out / "ablation.json")
        text = format_ablation_table(table)
        (out / "ablation.txt").write_text(text + "\n", encoding="utf-8")
        click.echo(text)
    except Exception as exc:
        _fail("ablation", exc)


@main.command("export-finetune")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--subtask", required=True, type=click.Choice(["A", "B"], case_sensitive=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
def export_finetune(corpus_path: str, taxonomy_path: str | None, subtask: str, out_dir: str) -> None:
    """Emit seq2seq source/target files plus the hyperparameter manifest."""
    try:
        corpus = load_corpus(corpus_path, _load_taxonomy(taxonomy_path))
        written = export_finetune_data(corpus, subtask, out_dir)
        for name, path in written.items():
            click.echo(f"{name}: {path}")
    except Exception as exc:
        _fail("export", exc)


@main.command()
@click.option("--references", "references_path", required=True, type=click.Path(),
              help="JSONL with {id, note} reference rows.")
@click.option("--hypotheses", "hypotheses_path", required=True, type=click.Path(),
              help="JSONL with {example_id|id, note} hypothesis rows.")
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--scorer", "scorer_endpoint", default="")
@click.option("--out", "out_dir", required=True, type=click.Path())
def evaluate(
    references_path: str,
    hypotheses_path: str,
    taxonomy_path: str | None,
    scorer_endpoint: str,
    out_dir: str,
) -> None:
    """Score a hypotheses file against a references file."""
    def read_notes(path: str) -> dict[str, str]:
        notes = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            notes[str(row.get("example_id") or row.get("id"))] = str(row["note"])
        return notes

    try:
        references = read_notes(references_path)
        hypotheses = read_notes(hypotheses_path)
        scorer = HttpScorer(scorer_endpoint) if scorer_endpoint else None
        report = evaluate_run(references, hypotheses, _load_taxonomy(taxonomy_path), scorer=scorer)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        click.echo(format_summary(report))
    except Exception as exc:
        _fail("evaluate", exc)


@main.group()
def study() -> None:
    """Blinded preference study management."""


@study.command("create")
@click.option("--notes", "notes_paths", multiple=True, required=True,
              help="system=path pairs; each path is JSONL {example_id|id, note}. Exactly 3.")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(),
              help="Supplies the dialogues (validation split by default).")
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@click.option("--split", default="validation")
@click.option("--seed", default=0, type=int)
@click.option("--study-id", default="study")
@click.option("--out", "out_dir", required=True, type=click.Path())
def study_create(
    notes_paths: tuple[str, ...],
    corpus_path: str,
    taxonomy_path: str | None,
    split: str,
    seed: int,
    study_id: str,
    out_dir: str,
) -> None:
    """Create and persist a blinded study from per-system note files."""
    try:
        systems = []
        notes_by_system: dict[str, dict[str, str]] = {}
        for item in notes_paths:
            system, _, path = item.partition("=")
            if not path:
                raise ValueError(f"--notes expects system=path, got {item!r}")
            rows = {}
            for line in Path(path).read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                rows[str(row.get("example_id") or row.get("id"))] = str(row["note"])
            systems.append(system)
            notes_by_system[system] = rows
        corpus = load_corpus(corpus_path, _load_taxonomy(taxonomy_path))
        examples = []
        for query in corpus.split(split):
            examples.append(
                {
                    "task_id": query.id,
                    "dialogue": query.dialogue,
                    "notes": {s: notes_by_system[s].get(query.id, "") for s in systems},
                }
            )
        study_obj = create_study(
            examples, seed=derive_seed(seed, "blinding"), systems=systems, study_id=study_id
        )
        StudyStore(out_dir).save(study_obj)
        click.echo(f"created study {study_id!r} with {len(study_obj.tasks)} tasks in {out_dir}")
    except Exception as exc:
        _fail("study-create", exc)


@study.command("serve")
@click.option("--dir", "study_dir", required=True, type=click.Path())
@click.option("--ui", "ui_dir", default=None, type=click.Path(),
              help="Static UI bundle directory to host at /.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def study_serve(study_dir: str, ui_dir: str | None, host: str, port: int) -> None:
    """Serve the annotation API (and the UI bundle when present)."""
    import uvicorn

    from .server import create_app

    app = create_app(StudyStore(study_dir), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@study.command("close")
@click.option("--dir", "study_dir", required=True, type=click.Path())
def study_close(study_dir: str) -> None:
    """Close the study; annotations stop and results open."""
    try:
        study_obj = StudyStore(study_dir).close_study()
        click.echo(f"study {study_obj.study_id!r} closed")
    except Exception as exc:
        _fail("study-close", exc)


@study.command("report")
@click.option("--dir", "study_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
def study_report(study_dir: str, out_dir: str | None) -> None:
    """Unblind, tally, and print win rates (requires a closed study)."""
    try:
        store = StudyStore(study_dir)
        study_obj = store.load()
        tally = unblind_and_tally(study_obj, store.annotation_store().records())
        rates = win_rate(tally)
        table = format_results_table(tally, rates)
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "tally.json").write_text(
                json.dumps(tally.to_dict(), indent=2), encoding="utf-8"
            )
            (out / "win_rate.json").write_text(
                json.dumps(
                    {
                        "per_annotator": {
                            a: r.to_dict() for a, r in rates["per_annotator"].items()
                        },
                        "overall": rates["overall"].to_dict(),
                    },
                    indent=2,
                ),
                encoding="utf-8",
            )
            (out / "results.txt").write_text(table + "\n", encoding="utf-8")
        click.echo(table)
    except Exception as exc:
        _fail("study-report", exc)


@study.command("annotate")
@click.option("--dir", "study_dir", required=True, type=click.Path())
@click.option("--annotator", required=True)
@click.option("--task", "task_id", required=True)
@click.option("--choice", required=True)
def study_annotate(study_dir: str, annotator: str, task_id: str, choice: str) -> None:
    """Record one annotation from the command line (testing convenience)."""
    try:
        store = StudyStore(study_dir)
        study_obj = store.load()
        ack = record_annotation(
            store.annotation_store(),
            study_obj,
            AnnotationRecord(annotator_id=annotator, task_id=task_id, choice=choice),
        )
        click.echo(json.dumps(ack))
    except Exception as exc:
        _fail("study-annotate", exc)


if __name__ == "__main__":
    main()
