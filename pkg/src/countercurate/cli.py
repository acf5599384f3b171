"""Command-line pipeline: curate -> generate -> assemble -> eval.

Every artifact is line-delimited JSON with a provenance header line
recording the command, seed and flags that produced it. Exit codes:
0 success, 1 usage error, 2 data error, 3 generator/LLM service error.
Setting precedence is flags > environment (COUNTERCURATE_SEED,
COUNTERCURATE_WORKERS) > --config JSON file.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import __version__
from .assemble import (
    BatchFlags,
    build_conversation,
    build_grouped_batches,
    eval_item_record,
    groups_from_items,
    split_train_test,
)
from .attributes import AttributeParseError, build_attribute_requests, items_from_response
from .corpus import CorpusError, CorpusIssue, load_corpus
from .counting import curate_counting
from .evalharness import ChoiceRecord, ScoreRecord, aggregate, format_report, score_choice, score_record
from .jobs import (
    JobKind,
    JobStatus,
    JobStore,
    ServiceError,
    dispatch_all,
    load_job_manifest,
    merge_jobs,
    mock_registry,
    registry_from_env,
    save_job_manifest,
)
from .manifests import iter_jsonl, read_header, write_jsonl
from .positions import curate_positions

logger = logging.getLogger(__name__)

TRACKS = ("positions", "counting", "attributes")


@dataclass
class PipelineConfig:
    """Resolved knobs serialized into every artifact header."""

    corpus: str | None = None
    tracks: tuple[str, ...] = ()
    seed: int = 0
    split_ratio: str = "4:1"
    batch_size: int = 8
    ablations: tuple[str, ...] = ()
    out_dir: str | None = None
    mock: bool = False
    extras: dict = field(default_factory=dict)

    def header(self, command: str) -> dict:
        config = {
            "command": command,
            "version": __version__,
            "seed": self.seed,
            "mock": self.mock,
        }
        if self.corpus:
            config["corpus"] = self.corpus
        if self.tracks:
            config["tracks"] = list(self.tracks)
        if command == "assemble":
            config["split_ratio"] = self.split_ratio
            config["batch_size"] = self.batch_size
            config["ablations"] = list(self.ablations)
        config.update(self.extras)
        return config


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _resolve(flag_value, env_name: str, config: dict, key: str, default, cast=int):
    if flag_value is not None:
        return flag_value
    if env_name in os.environ:
        return cast(os.environ[env_name])
    if key in config:
        return cast(config[key])
    return default


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def cli(verbose: bool):
    """Counterfactual image-caption curation and evaluation pipeline."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")


def _load_records(corpus: str):
    issues: list[CorpusIssue] = []
    try:
        records = list(load_corpus(corpus, issues=issues))
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {corpus}: {exc}") from exc
    if issues:
        click.echo(f"skipped {len(issues)} invalid corpus line(s)", err=True)
    return records, issues


def _save_jobs(jobs_path: Path, new_jobs, header: dict) -> list:
    existing = load_job_manifest(jobs_path) if jobs_path.is_file() else []
    merged = merge_jobs(existing, new_jobs)
    save_job_manifest(jobs_path, merged, header=header)
    return merged


def _dispatch(jobs_path: Path, mock: bool, workers: int, header: dict):
    jobs = load_job_manifest(jobs_path)
    registry = mock_registry() if mock else registry_from_env()
    needed = {job.kind for job in jobs if job.status is JobStatus.PENDING}
    missing = [kind.value for kind in needed if kind not in registry]
    if missing:
        raise ServiceError(
            f"no client for kind(s) {', '.join(sorted(missing))}; set COUNTERCURATE_ENDPOINT_<KIND> or use --mock"
        )
    store = JobStore(jobs, out_dir=jobs_path.parent)
    counts = dispatch_all(store, registry, workers=workers)
    save_job_manifest(jobs_path, store.jobs(), header=header)
    return store, counts


def _finalize_attribute_items(store: JobStore):
    """Turn finished attribute LLM jobs into items plus pending T2I jobs."""
    items = []
    t2i_jobs = []
    dropped = 0
    for job in store.jobs():
        if job.kind is not JobKind.LLM_TEXT or job.status is not JobStatus.DONE:
            continue
        metadata = job.payload.get("metadata", {})
        if job.payload.get("expected_format") != "attribute_json" or "caption" not in metadata:
            continue
        response = store.read_text_output(job.job_id)
        try:
            new_items, new_jobs = items_from_response(
                image_id=metadata["image_id"],
                positive_caption=metadata["caption"],
                response_text=response,
                llm_job_id=job.job_id,
                image_path=metadata.get("image"),
            )
        except AttributeParseError as exc:
            logger.warning("dropping attribute response for %s: %s", metadata.get("image_id"), exc)
            dropped += 1
            continue
        items.extend(new_items)
        t2i_jobs.extend(new_jobs)
    return items, t2i_jobs, dropped


@cli.command()
@click.option("--track", type=click.Choice(TRACKS), required=True)
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Recorded in headers; curation itself is deterministic.")
@click.option("--mock", is_flag=True, help="Resolve generation jobs immediately with deterministic mocks.")
@click.option("--workers", type=int, default=None)
@click.option("--overlap-closure", type=click.Choice(["direct", "transitive"]), default="direct", show_default=True)
@click.option("--count-style", type=click.Choice(["words", "digits"]), default="words", show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON file with default settings.")
def curate(track, corpus, out_dir, seed, mock, workers, overlap_closure, count_style, config_path):
    """Build counterfactual items and generation jobs for one track."""
    file_config = _load_config_file(config_path)
    seed = _resolve(seed, "COUNTERCURATE_SEED", file_config, "seed", 0)
    workers = _resolve(workers, "COUNTERCURATE_WORKERS", file_config, "workers", 1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, _ = _load_records(corpus)

    config = PipelineConfig(
        corpus=str(corpus),
        tracks=(track,),
        seed=seed,
        mock=mock,
        out_dir=str(out),
        extras={"overlap_closure": overlap_closure, "count_style": count_style} if track == "counting" else {},
    )
    header = config.header("curate")
    jobs_path = out / "jobs.jsonl"

    if track == "positions":
        items, jobs = curate_positions(records)
    elif track == "counting":
        items, jobs = curate_counting(records, closure=overlap_closure, style=count_style)
    else:
        jobs = build_attribute_requests(records, out_dir=out)
        items = []

    _save_jobs(jobs_path, jobs, header)
    if mock:
        store, _ = _dispatch(jobs_path, mock=True, workers=workers, header=header)
    else:
        store = JobStore(load_job_manifest(jobs_path), out_dir=out)

    if track == "attributes":
        attr_items, t2i_jobs, dropped = _finalize_attribute_items(store)
        if t2i_jobs:
            _save_jobs(jobs_path, t2i_jobs, header)
            if mock:
                _dispatch(jobs_path, mock=True, workers=workers, header=header)
        items = attr_items
        if dropped:
            click.echo(f"dropped {dropped} unparseable attribute response(s)", err=True)
        if not items and not mock:
            click.echo(
                "attribute requests planned; run `countercurate generate` then re-run this command to emit items",
                err=True,
            )

    items_path = out / f"items_{track}.jsonl"
    n = write_jsonl(items_path, (item.to_json() for item in items), header=header)
    click.echo(f"{track}: {n} item(s) -> {items_path}, {len(load_job_manifest(jobs_path))} job(s) -> {jobs_path}")


@cli.command()
@click.option("--jobs", "jobs_path", type=click.Path(exists=True), required=True)
@click.option("--mock", is_flag=True)
@click.option("--workers", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def generate(jobs_path, mock, workers, config_path):
    """Execute pending generation jobs against mock or remote services."""
    file_config = _load_config_file(config_path)
    workers = _resolve(workers, "COUNTERCURATE_WORKERS", file_config, "workers", 1)
    jobs_path = Path(jobs_path)
    header = read_header(jobs_path) or PipelineConfig(mock=mock).header("generate")
    _, counts = _dispatch(jobs_path, mock=mock, workers=workers, header=header)
    click.echo(
        f"jobs: {counts[JobStatus.DONE]} done, {counts[JobStatus.PENDING]} pending, {counts[JobStatus.FAILED]} failed"
    )
    if counts[JobStatus.FAILED]:
        raise ServiceError(f"{counts[JobStatus.FAILED]} job(s) failed")


def _export_positive_images(item_records: list[dict], out: Path) -> None:
    """Copy referenced source images into out/images and rewrite refs."""
    copied: dict[str, str] = {}
    for record in item_records:
        src = record.get("image")
        image_id = record["image_id"]
        if image_id in copied:
            record["image"] = copied[image_id]
            continue
        if not src or not Path(src).is_file():
            logger.warning("source image for %s not found (%s); keeping ref as-is", image_id, src)
            continue
        rel = f"images/{image_id}{Path(src).suffix or '.png'}"
        dest = out / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        if not dest.exists():
            shutil.copyfile(src, dest)
        copied[image_id] = rel
        record["image"] = rel


@cli.command()
@click.option("--items", "item_paths", type=click.Path(exists=True), multiple=True, required=True)
@click.option("--jobs", "jobs_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--split", "split_ratio", default="4:1", show_default=True, help="train:test ratio.")
@click.option("--no-grouping", is_flag=True)
@click.option("--no-negative-images", is_flag=True)
@click.option("--no-negative-captions", is_flag=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
def assemble(
    item_paths, jobs_path, out_dir, batch_size, seed, split_ratio,
    no_grouping, no_negative_images, no_negative_captions, config_path,
):
    """Assemble batches, conversations and benchmark items from curated items."""
    file_config = _load_config_file(config_path)
    seed = _resolve(seed, "COUNTERCURATE_SEED", file_config, "seed", 0)
    batch_size = _resolve(batch_size, "COUNTERCURATE_BATCH_SIZE", file_config, "batch_size", 8)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs_path = Path(jobs_path)

    try:
        train_part, test_part = (int(x) for x in split_ratio.split(":"))
    except ValueError as exc:
        raise click.UsageError(f"--split must look like 4:1, got {split_ratio!r}") from exc

    ablations = tuple(
        name
        for name, flag in (
            ("no_grouping", no_grouping),
            ("no_negative_images", no_negative_images),
            ("no_negative_captions", no_negative_captions),
        )
        if flag
    )
    config = PipelineConfig(
        seed=seed,
        split_ratio=split_ratio,
        batch_size=batch_size,
        ablations=ablations,
        out_dir=str(out),
        extras={"items": [str(p) for p in item_paths]},
    )
    header = config.header("assemble")

    item_records: list[dict] = []
    for path in item_paths:
        item_records.extend(iter_jsonl(path))
    if not item_records:
        raise CorpusError("no items to assemble")

    jobs = load_job_manifest(jobs_path)
    jobs_by_id = {job.job_id: job for job in jobs}
    jobs_dir = jobs_path.parent.resolve()

    def resolve_output(job) -> str | None:
        if job.status is not JobStatus.DONE or not job.output_path:
            return None
        if jobs_dir != out.resolve():
            src = jobs_dir / job.output_path
            dest = out / job.output_path
            if src.is_file() and not dest.exists():
                dest.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(src, dest)
        return job.output_path

    _export_positive_images(item_records, out)
    groups, incomplete = groups_from_items(item_records, jobs_by_id, resolve_output)
    if incomplete:
        click.echo(f"{incomplete} group(s) lack a finished negative image", err=True)

    train, test = split_train_test(groups, ratio=(train_part, test_part), seed=seed)
    flags = BatchFlags.from_ablations(
        no_negative_images=no_negative_images,
        no_negative_captions=no_negative_captions,
        no_grouping=no_grouping,
    )
    batches = build_grouped_batches(train, batch_size, seed=seed, flags=flags)
    conversations = [rec for group in train if group.complete for rec in build_conversation(group, seed=seed)]
    eval_items = [eval_item_record(group, seed=seed) for group in test]

    write_jsonl(out / "batches.jsonl", batches, header=header)
    write_jsonl(out / "conversations.jsonl", conversations, header=header)
    write_jsonl(out / "eval_items.jsonl", eval_items, header=header)
    click.echo(
        f"assembled {len(batches)} batch(es), {len(conversations)} conversation(s), "
        f"{len(eval_items)} eval item(s) from {len(train)}/{len(test)} train/test groups -> {out}"
    )


@cli.command(name="eval")
@click.option("--items", "items_path", type=click.Path(exists=True), required=True)
@click.option("--scores", "scores_path", type=click.Path(exists=True), default=None)
@click.option("--choices", "choices_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None, help="JSON report destination.")
def eval_cmd(items_path, scores_path, choices_path, report_path):
    """Score model outputs against emitted benchmark items."""
    if not scores_path and not choices_path:
        raise click.UsageError("provide --scores and/or --choices")
    category_by_item: dict[str, str] = {}
    for record in iter_jsonl(items_path):
        category_by_item[record["item_id"]] = record.get("category", "uncategorized")

    scored: list[tuple[str, float]] = []
    bad_lines = 0
    if scores_path:
        for line_no, record in enumerate(iter_jsonl(scores_path), start=1):
            try:
                score = ScoreRecord.from_json(record)
                scored.append((score.item_id, score_record(score)))
            except (KeyError, TypeError, ValueError) as exc:
                logger.warning("scores line %d: %s", line_no, exc)
                bad_lines += 1
    if choices_path:
        for line_no, record in enumerate(iter_jsonl(choices_path), start=1):
            try:
                choice = ChoiceRecord(item_id=record["item_id"], chosen=record["chosen"])
                scored.append((choice.item_id, score_choice(choice)))
            except (KeyError, TypeError, ValueError) as exc:
                logger.warning("choices line %d: %s", line_no, exc)
                bad_lines += 1

    report = aggregate(scored, category_by_item)
    if bad_lines:
        report.warnings.append(f"{bad_lines} malformed record line(s) skipped")
    click.echo(format_report(report))
    destination = Path(report_path) if report_path else Path(str(scores_path or choices_path) + ".report.json")
    destination.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    click.echo(f"report -> {destination}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (CorpusError, json.JSONDecodeError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    except ServiceError as exc:
        click.echo(f"service error: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
