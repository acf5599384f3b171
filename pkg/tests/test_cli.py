import json
import time

from countercurate.cli import main
from countercurate.jobs import JobKind, JobStatus, load_job_manifest
from countercurate.manifests import iter_jsonl, read_header, write_jsonl


def run_cli(*args):
    try:
        return main([str(a) for a in args])
    except SystemExit as exc:
        return exc.code


class TestCurate:
    def test_positions_writes_items_and_jobs(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        assert run_cli("curate", "--track", "positions", "--corpus", fixture_corpus, "--out", out) == 0
        items = list(iter_jsonl(out / "items_positions.jsonl"))
        jobs = load_job_manifest(out / "jobs.jsonl")
        assert items and jobs
        assert {item["subset"] for item in items} <= {"LR", "AB"}
        assert all(job.status is JobStatus.PENDING for job in jobs)

    def test_counting_mock_resolves_jobs(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        assert run_cli("curate", "--track", "counting", "--corpus", fixture_corpus, "--out", out, "--mock") == 0
        jobs = load_job_manifest(out / "jobs.jsonl")
        assert jobs and all(job.status is JobStatus.DONE for job in jobs)
        for job in jobs:
            assert (out / job.output_path).is_file()

    def test_unknown_track_usage_error(self, fixture_corpus, tmp_path):
        assert run_cli("curate", "--track", "nonsense", "--corpus", fixture_corpus, "--out", tmp_path) == 1

    def test_missing_corpus_data_error(self, tmp_path):
        assert run_cli("curate", "--track", "positions", "--corpus", tmp_path / "nope.jsonl", "--out", tmp_path) == 2

    def test_headers_carry_provenance(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        run_cli("curate", "--track", "positions", "--corpus", fixture_corpus, "--out", out, "--seed", 5)
        header = read_header(out / "items_positions.jsonl")
        assert header["command"] == "curate"
        assert header["seed"] == 5
        assert header["tracks"] == ["positions"]

    def test_attributes_two_phase_without_mock(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        assert run_cli("curate", "--track", "attributes", "--corpus", fixture_corpus, "--out", out) == 0
        assert list(iter_jsonl(out / "items_attributes.jsonl")) == []
        assert run_cli("generate", "--jobs", out / "jobs.jsonl", "--mock") == 0
        assert run_cli("curate", "--track", "attributes", "--corpus", fixture_corpus, "--out", out) == 0
        items = list(iter_jsonl(out / "items_attributes.jsonl"))
        assert items
        assert {item["kind"] for item in items} <= {"noun", "adjective", "reverse"}


class TestGenerate:
    def test_no_client_service_error(self, fixture_corpus, tmp_path, monkeypatch):
        for var in list("COUNTERCURATE_ENDPOINT_" + k.env_suffix for k in JobKind):
            monkeypatch.delenv(var, raising=False)
        out = tmp_path / "out"
        run_cli("curate", "--track", "counting", "--corpus", fixture_corpus, "--out", out)
        assert run_cli("generate", "--jobs", out / "jobs.jsonl") == 3

    def test_rerun_is_noop(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        run_cli("curate", "--track", "counting", "--corpus", fixture_corpus, "--out", out, "--mock")
        before = (out / "jobs.jsonl").read_bytes()
        assert run_cli("generate", "--jobs", out / "jobs.jsonl", "--mock") == 0
        assert (out / "jobs.jsonl").read_bytes() == before


class TestAssembleAndEval:
    def test_pipeline_artifacts(self, mock_pipeline):
        out = mock_pipeline
        batches = list(iter_jsonl(out / "batches.jsonl"))
        conversations = list(iter_jsonl(out / "conversations.jsonl"))
        eval_items = list(iter_jsonl(out / "eval_items.jsonl"))
        assert batches and conversations and eval_items
        for batch in batches:
            assert batch["positives"] == [[i, i] for i in range(len(batch["captions"]))]
        for item in eval_items:
            assert (out / item["image"]).is_file()
            assert (out / item["image_neg"]).is_file()

    def test_every_item_references_terminal_job(self, mock_pipeline):
        out = mock_pipeline
        jobs = {job.job_id: job for job in load_job_manifest(out / "jobs.jsonl")}
        terminal = {JobKind.HFLIP, JobKind.INPAINT, JobKind.BOXED_T2I, JobKind.TEXT_TO_IMAGE}
        for name in ("items_positions.jsonl", "items_counting.jsonl", "items_attributes.jsonl"):
            for item in iter_jsonl(out / name):
                job = jobs[item["job_id"]]
                assert job.kind in terminal
                if job.kind is JobKind.BOXED_T2I:
                    assert jobs[job.payload["prompt_job"]].kind is JobKind.LLM_TEXT

    def test_eval_oracle_reports_100(self, mock_pipeline, tmp_path, capsys):
        out = mock_pipeline
        items = list(iter_jsonl(out / "eval_items.jsonl"))
        scores = tmp_path / "scores.jsonl"
        write_jsonl(
            scores,
            (
                {"item_id": it["item_id"], "s_CI": 0.9, "s_CnI": 0.1, "s_CIn": 0.1, "s_CnIn": 0.9}
                for it in items
            ),
        )
        report_path = tmp_path / "report.json"
        assert run_cli("eval", "--items", out / "eval_items.jsonl", "--scores", scores, "--report", report_path) == 0
        stdout = capsys.readouterr().out
        assert "100.00" in stdout
        report = json.loads(report_path.read_text())
        assert report["overall"]["accuracy"] == 100.0
        assert report["orphans"] == []

    def test_eval_choices_file(self, mock_pipeline, tmp_path):
        out = mock_pipeline
        items = list(iter_jsonl(out / "eval_items.jsonl"))
        choices = tmp_path / "choices.jsonl"
        write_jsonl(choices, ({"item_id": it["item_id"], "chosen": "positive"} for it in items))
        report_path = tmp_path / "r.json"
        assert run_cli("eval", "--items", out / "eval_items.jsonl", "--choices", choices, "--report", report_path) == 0
        assert json.loads(report_path.read_text())["overall"]["accuracy"] == 100.0

    def test_eval_requires_scores_or_choices(self, mock_pipeline):
        assert run_cli("eval", "--items", mock_pipeline / "eval_items.jsonl") == 1

    def test_all_three_ablations_reproduce_vanilla_pairs(self, fixture_corpus, tmp_path):
        out = tmp_path / "out"
        run_cli("curate", "--track", "positions", "--corpus", fixture_corpus, "--out", out, "--mock")
        assert (
            run_cli(
                "assemble",
                "--items", out / "items_positions.jsonl",
                "--jobs", out / "jobs.jsonl",
                "--out", out,
                "--batch-size", "2",
                "--no-negative-images",
                "--no-negative-captions",
                "--no-grouping",
            )
            == 0
        )
        batches = list(iter_jsonl(out / "batches.jsonl"))
        assert batches
        for batch in batches:
            assert len(batch["captions"]) == 2
            assert len(batch["images"]) == 2
            assert batch["positives"] == [[0, 0], [1, 1]]

    def test_smoke_runtime_under_10s(self, fixture_corpus, tmp_path):
        start = time.monotonic()
        out = tmp_path / "speed"
        for track in ("positions", "counting", "attributes"):
            assert run_cli("curate", "--track", track, "--corpus", fixture_corpus, "--out", out, "--mock") == 0
        assert (
            run_cli(
                "assemble",
                "--items", out / "items_positions.jsonl",
                "--items", out / "items_counting.jsonl",
                "--items", out / "items_attributes.jsonl",
                "--jobs", out / "jobs.jsonl",
                "--out", out,
                "--batch-size", "4",
            )
            == 0
        )
        assert time.monotonic() - start < 10.0
