from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from notegen.cli import derive_seed, main
from notegen.corpus import save_corpus
from notegen.synthetic import make_synthetic_corpus


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    save_corpus(make_synthetic_corpus(n_train=10, n_validation=4, seed=2), path)
    return path


@pytest.fixture
def runner():
    return CliRunner()


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(42, "selection") == derive_seed(42, "selection")

    def test_domain_separated(self):
        assert derive_seed(42, "selection") != derive_seed(42, "blinding")

    def test_64_bit(self):
        assert 0 <= derive_seed(7, "x") < 2**64


class TestIngest:
    def test_counts_printed(self, runner, corpus_file):
        result = runner.invoke(main, ["ingest", "--corpus", str(corpus_file)])
        assert result.exit_code == 0
        assert '"train": 10' in result.output
        assert '"validation": 4' in result.output

    def test_missing_corpus_fails(self, runner, tmp_path):
        result = runner.invoke(main, ["ingest", "--corpus", str(tmp_path / "nope.jsonl")])
        assert result.exit_code == 1
        assert "ingest" in result.output

    def test_missing_taxonomy_is_config_error(self, runner, corpus_file, tmp_path):
        result = runner.invoke(
            main,
            ["ingest", "--corpus", str(corpus_file), "--taxonomy", str(tmp_path / "t.json")],
        )
        assert result.exit_code == 1


class TestSynth:
    def test_writes_corpus(self, runner, tmp_path):
        out = tmp_path / "synth.jsonl"
        result = runner.invoke(
            main, ["synth", "--train", "5", "--validation", "2", "--out", str(out)]
        )
        assert result.exit_code == 0
        assert len(out.read_text().splitlines()) == 7


class TestPipeline:
    def run_pipeline(self, runner, corpus_file, out_dir, extra=()):
        args = [
            "pipeline",
            "--corpus", str(corpus_file),
            "--split", "validation",
            "--backend", "mock_nearest_note",
            "--seed", "11",
            "--out", str(out_dir),
            *extra,
        ]
        return runner.invoke(main, args)

    def test_end_to_end_outputs(self, runner, corpus_file, tmp_path):
        out = tmp_path / "run"
        result = self.run_pipeline(runner, corpus_file, out)
        assert result.exit_code == 0, result.output
        notes = [json.loads(l) for l in (out / "notes" / "notes.jsonl").read_text().splitlines()]
        assert len(notes) == 4
        assert set(notes[0]) == {"example_id", "note", "manifest_ref"}
        assert (out / "reports" / "report.json").exists()
        assert (out / "reports" / "summary.txt").exists()
        assert (out / "manifest.json").exists()
        assert (out / "prompts" / "prompts.jsonl").exists()
        assert (out / "repairs" / "repairs.jsonl").exists()

    def test_dry_run_renders_prompts_only(self, runner, corpus_file, tmp_path):
        out = tmp_path / "dry"
        result = self.run_pipeline(runner, corpus_file, out, extra=["--dry-run"])
        assert result.exit_code == 0, result.output
        assert (out / "prompts" / "prompts.jsonl").exists()
        assert not (out / "notes").exists()

    def test_reruns_byte_identical(self, runner, corpus_file, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert self.run_pipeline(runner, corpus_file, first).exit_code == 0
        assert self.run_pipeline(runner, corpus_file, second).exit_code == 0
        for rel in ("notes/notes.jsonl", "reports/report.json"):
            assert (first / rel).read_bytes() == (second / rel).read_bytes()

    def test_scorer_adds_average_column(self, runner, corpus_file, tmp_path):
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                data = json.dumps({"scores": [0.5] * len(body["pairs"])}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            out = tmp_path / "scored"
            result = self.run_pipeline(
                runner, corpus_file, out,
                extra=["--scorer", f"http://127.0.0.1:{server.server_port}/score"],
            )
            assert result.exit_code == 0, result.output
            report = json.loads((out / "reports" / "report.json").read_text())
            assert "average" in report["aggregate"]
            row = report["per_example"][0]
            expected = (row["rouge1_f1"] + 0.5 + 0.5) / 3.0
            assert abs(row["average"] - expected) <= 1e-12
        finally:
            server.shutdown()

    def test_config_file_drives_run(self, runner, corpus_file, tmp_path):
        from notegen.generation import BackendDescriptor, PipelineConfig
        from notegen.selection import SelectionConfig

        config = PipelineConfig(
            selection=SelectionConfig(strategy="similar", k=1),
            backend=BackendDescriptor(kind="mock_canned", canned_text="PLAN\nCanned."),
            seed=3,
        )
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps(config.to_dict()))
        out = tmp_path / "cfg-run"
        result = self.run_pipeline(
            runner, corpus_file, out, extra=["--config", str(config_path)]
        )
        assert result.exit_code == 0, result.output
        notes = [json.loads(l) for l in (out / "notes" / "notes.jsonl").read_text().splitlines()]
        assert all(row["note"] == "PLAN\nCanned." for row in notes)

    def test_missing_taxonomy_exits_nonzero(self, runner, corpus_file, tmp_path):
        result = self.run_pipeline(
            runner, corpus_file, tmp_path / "x",
            extra=["--taxonomy", str(tmp_path / "missing.json")],
        )
        assert result.exit_code == 1
        assert "load" in result.output

    def test_remote_backend_failure_names_stage(self, runner, corpus_file, tmp_path, monkeypatch):
        import notegen.generation

        monkeypatch.setattr(notegen.generation.time, "sleep", lambda s: None)
        result = self.run_pipeline(
            runner, corpus_file, tmp_path / "x",
            extra=["--backend", "remote_chat", "--endpoint", "http://127.0.0.1:1/x"],
        )
        assert result.exit_code == 1
        assert "generate" in result.output


class TestRank:
    def test_dump_rankings(self, runner, corpus_file, tmp_path):
        out = tmp_path / "rank"
        result = runner.invoke(
            main,
            ["rank", "--corpus", str(corpus_file), "--split", "validation",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        rows = [json.loads(l) for l in (out / "rankings.jsonl").read_text().splitlines()]
        assert len(rows) == 4
        assert len(rows[0]["candidates"]) == 10
        scores = [c["score"] for c in rows[0]["candidates"]]
        assert scores == sorted(scores, reverse=True)


class TestAblationCommand:
    def test_grid_runs(self, runner, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        save_corpus(make_synthetic_corpus(n_train=8, n_validation=2, seed=4), corpus_path)
        out = tmp_path / "grid"
        result = runner.invoke(
            main,
            ["ablation", "--corpus", str(corpus_path), "--split", "validation",
             "--seed", "3", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        table = json.loads((out / "ablation.json").read_text())
        populated = [c for c in table["cells"] if c["status"] == "ok"]
        assert len(populated) == 24


class TestExportFinetune:
    def test_subtask_b(self, runner, corpus_file, tmp_path):
        out = tmp_path / "ft"
        result = runner.invoke(
            main,
            ["export-finetune", "--corpus", str(corpus_file), "--subtask", "B",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "hyperparameters.json").read_text())
        assert manifest["hyperparameters"]["max_source_length"] == 4096

    def test_subtask_a_targets(self, runner, corpus_file, tmp_path):
        out = tmp_path / "ft-a"
        result = runner.invoke(
            main,
            ["export-finetune", "--corpus", str(corpus_file), "--subtask", "A",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        rows = [json.loads(l) for l in (out / "train.jsonl").read_text().splitlines()]
        assert all(row["target"].startswith("Section header: ") for row in rows)
        manifest = json.loads((out / "hyperparameters.json").read_text())
        assert manifest["hyperparameters"]["learning_rate"] == 1e-4
        assert manifest["hyperparameters"]["num_train_epochs"] == 20


class TestEvaluateCommand:
    def test_refs_vs_hyps(self, runner, tmp_path):
        refs = tmp_path / "refs.jsonl"
        hyps = tmp_path / "hyps.jsonl"
        refs.write_text(json.dumps({"id": "V1", "note": "CHIEF COMPLAINT\nCough."}) + "\n")
        hyps.write_text(json.dumps({"example_id": "V1", "note": "CHIEF COMPLAINT\nCough."}) + "\n")
        out = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["evaluate", "--references", str(refs), "--hypotheses", str(hyps),
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert report["aggregate"]["rouge1_f1"] == 1.0


class TestStudyCommands:
    def make_notes_file(self, path, corpus, suffix):
        rows = [
            {"example_id": e.id, "note": f"CHIEF COMPLAINT\n{suffix} for {e.id}"}
            for e in corpus.split("validation")
        ]
        with path.open("w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

    def test_create_close_report_flow(self, runner, corpus_file, tmp_path):
        corpus = make_synthetic_corpus(n_train=10, n_validation=4, seed=2)
        for name in ("gt", "ft", "icl"):
            self.make_notes_file(tmp_path / f"{name}.jsonl", corpus, name)
        study_dir = tmp_path / "study"
        created = runner.invoke(
            main,
            ["study", "create",
             "--corpus", str(corpus_file),
             "--notes", f"GT={tmp_path / 'gt.jsonl'}",
             "--notes", f"FT={tmp_path / 'ft.jsonl'}",
             "--notes", f"ICL={tmp_path / 'icl.jsonl'}",
             "--seed", "42",
             "--out", str(study_dir)],
        )
        assert created.exit_code == 0, created.output

        # identical seed reproduces the blinding key
        second_dir = tmp_path / "study2"
        runner.invoke(
            main,
            ["study", "create",
             "--corpus", str(corpus_file),
             "--notes", f"GT={tmp_path / 'gt.jsonl'}",
             "--notes", f"FT={tmp_path / 'ft.jsonl'}",
             "--notes", f"ICL={tmp_path / 'icl.jsonl'}",
             "--seed", "42",
             "--out", str(second_dir)],
        )
        key_a = (study_dir / "blinding_key.json").read_text()
        key_b = (second_dir / "blinding_key.json").read_text()
        assert key_a == key_b

        # report before close is refused
        early = runner.invoke(main, ["study", "report", "--dir", str(study_dir)])
        assert early.exit_code == 1

        annotated = runner.invoke(
            main,
            ["study", "annotate", "--dir", str(study_dir),
             "--annotator", "ann1", "--task", "V1", "--choice", "A"],
        )
        assert annotated.exit_code == 0, annotated.output

        closed = runner.invoke(main, ["study", "close", "--dir", str(study_dir)])
        assert closed.exit_code == 0

        report = runner.invoke(
            main, ["study", "report", "--dir", str(study_dir), "--out", str(tmp_path / "res")]
        )
        assert report.exit_code == 0, report.output
        assert "Total" in report.output
        assert (tmp_path / "res" / "tally.json").exists()
        assert (tmp_path / "res" / "win_rate.json").exists()
