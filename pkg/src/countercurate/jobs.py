"""Generation jobs: serialized work orders for flip/inpaint/T2I/LLM services.

A job's id is a content hash of (kind, payload), so re-planning the same
work yields the same job and re-dispatching a Done job is a no-op. The only
shared mutable state is the JobStore; clients themselves are stateless.

Wire contract for remote generators (endpoints via COUNTERCURATE_ENDPOINT_<KIND>,
bearer token via COUNTERCURATE_API_TOKEN, timeout seconds via COUNTERCURATE_TIMEOUT):

    POST /v1/generate {kind, prompt?, regions?: [{box: [x1,y1,x2,y2], prompt}],
                       image_b64?, params: {quality?, style?, ...}} -> {image_b64}
    POST /v1/complete {prompt, images_b64?: [...]} -> {text}
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from PIL import Image

from .manifests import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)

ENV_TOKEN = "COUNTERCURATE_API_TOKEN"
ENV_ENDPOINT_PREFIX = "COUNTERCURATE_ENDPOINT_"
ENV_TIMEOUT = "COUNTERCURATE_TIMEOUT"

MAX_ATTEMPTS = 3


class JobKind(str, Enum):
    HFLIP = "hflip"
    INPAINT = "inpaint"
    BOXED_T2I = "boxed_t2i"
    TEXT_TO_IMAGE = "text_to_image"
    LLM_TEXT = "llm_text"

    @property
    def env_suffix(self) -> str:
        return self.value.replace("_", "").upper()

    @property
    def is_text(self) -> bool:
        return self is JobKind.LLM_TEXT


class JobStatus(str, Enum):
    PENDING = "pending"
    DONE = "done"
    FAILED = "failed"


class ServiceError(RuntimeError):
    """A generator/LLM client failed (after retries, or no client registered)."""


class PermanentJobError(ServiceError):
    """Failure that retrying cannot fix (missing input file, bad payload)."""


class DependencyPending(ServiceError):
    """A job was dispatched before the LlmText job it depends on finished."""


@dataclass(frozen=True)
class GenerationJob:
    job_id: str
    kind: JobKind
    payload: dict
    status: JobStatus = JobStatus.PENDING
    output_path: str | None = None
    attempts: int = 0
    error: str | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        record = {
            "job_id": self.job_id,
            "kind": self.kind.value,
            "payload": self.payload,
            "status": self.status.value,
            "output_path": self.output_path,
        }
        if self.attempts:
            record["attempts"] = self.attempts
        if self.error:
            record["error"] = self.error
        if self.meta:
            record["meta"] = self.meta
        return record

    @classmethod
    def from_json(cls, record: dict) -> "GenerationJob":
        return cls(
            job_id=record["job_id"],
            kind=JobKind(record["kind"]),
            payload=record["payload"],
            status=JobStatus(record.get("status", "pending")),
            output_path=record.get("output_path"),
            attempts=record.get("attempts", 0),
            error=record.get("error"),
            meta=record.get("meta", {}),
        )


def _payload_hash(kind: JobKind, payload: dict) -> str:
    blob = json.dumps([kind.value, payload], sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_job(kind: JobKind, payload: dict) -> GenerationJob:
    """Create a job whose id is the content hash of (kind, payload)."""
    if kind is JobKind.HFLIP and payload.get("prompt"):
        raise ValueError("hflip jobs carry no prompt")
    if kind is JobKind.HFLIP and str(payload.get("image", "")).startswith("job:"):
        raise ValueError("jobs are single-step: cannot flip another job's output")
    for region in payload.get("regions", []):
        x1, y1, x2, y2 = region["box"]
        w, h = payload.get("width"), payload.get("height")
        if w is not None and h is not None and not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
            raise ValueError(f"region box {region['box']} outside {w}x{h} canvas")
    return GenerationJob(job_id=_payload_hash(kind, payload), kind=kind, payload=payload)


def job_for_request(request, metadata: dict | None = None) -> GenerationJob:
    """Wrap an LlmRequest into an LlmText job (same request -> same job id)."""
    payload = {
        "prompt": request.user,
        "images": [list(pair) for pair in request.images],
        "expected_format": request.expected_format,
    }
    if request.system:
        payload["system"] = request.system
    if metadata:
        payload["metadata"] = metadata
    return make_job(JobKind.LLM_TEXT, payload)


# --- execution -------------------------------------------------------------


def execute_hflip(job: GenerationJob) -> bytes:
    """Mirror the source image left-right; returns PNG bytes."""
    src = job.payload.get("image")
    if not src or not Path(src).is_file():
        raise PermanentJobError(f"hflip source image not found: {src}")
    with Image.open(src) as img:
        flipped = img.transpose(Image.Transpose.FLIP_LEFT_RIGHT)
        buf = io.BytesIO()
        flipped.save(buf, format="PNG")
    return buf.getvalue()


class LocalFlipClient:
    """Executes HFlip jobs in-process; no service round-trip."""

    max_in_flight = 8

    def run(self, job: GenerationJob, prompt: str | None = None) -> bytes:
        return execute_hflip(job)


class MockImageClient:
    """Deterministic placeholder generator: pixels derived from the job id."""

    max_in_flight = 8

    def __init__(self, size: tuple[int, int] = (64, 48)):
        self.size = size

    def run(self, job: GenerationJob, prompt: str | None = None) -> bytes:
        digest = hashlib.sha256(job.job_id.encode("utf-8")).digest()
        w, h = self.size
        raw = (digest * (w * h * 3 // len(digest) + 1))[: w * h * 3]
        img = Image.frombytes("RGB", (w, h), raw)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def _mock_attribute_answer(metadata: dict) -> str:
    """Appendix-style negatives for the mock LLM, derived from tagged entities."""
    entities = [tuple(e) for e in metadata.get("entities", [])]
    caption = metadata.get("caption", "")
    if not entities or not caption:
        return '{"noun": None, "adjective": None, "reverse": None}'

    swaps = {
        "people": "officer", "clothing": "jacket", "animals": "lizard",
        "scene": "courtyard", "vehicles": "wagon", "instruments": "drum",
        "bodyparts": "elbow", "other": "crate",
    }

    def quote(s: str) -> str:
        return '"' + s.replace('"', "'") + '"'

    def entry(entity_id: int, old: str, new: str) -> str:
        new_caption = caption.replace(old, new, 1)
        return f'{{"action": ({entity_id}, {quote(old)}, {quote(new)}), "caption": {quote(new_caption)}}}'

    ent_id, ent_type, phrase = entities[0]
    words = phrase.split()
    noun_word = swaps.get(ent_type, swaps["other"])
    article = "an" if noun_word[0] in "aeiou" else "a"
    noun_new = " ".join([article] + words[1:-1] + [noun_word]) if len(words) > 1 else f"{article} {noun_word}"
    noun = entry(ent_id, phrase, noun_new)

    adj_id, _, adj_phrase = entities[1] if len(entities) > 1 else entities[0]
    adj_words = adj_phrase.split()
    if len(adj_words) >= 3:
        adj_new = " ".join([adj_words[0], "turquoise"] + adj_words[2:])
    elif len(adj_words) == 2:
        adj_new = f"{adj_words[0]} turquoise {adj_words[1]}"
    else:
        adj_new = f"turquoise {adj_phrase}"
    adjective = entry(adj_id, adj_phrase, adj_new)

    reverse = "None"
    by_type: dict[str, list[tuple[int, str, str]]] = {}
    for ent in entities:
        by_type.setdefault(ent[1], []).append(ent)
    for _, group in sorted(by_type.items()):
        if len(group) >= 2:
            (id_a, _, ph_a), (id_b, _, ph_b) = group[0], group[1]
            if ph_a != ph_b:
                swapped = caption.replace(ph_a, "\x00", 1).replace(ph_b, ph_a, 1).replace("\x00", ph_b, 1)
                reverse = f'{{"action": ({id_a}, {id_b}), "caption": {quote(swapped)}}}'
                break
    return f'{{"noun": {noun}, "adjective": {adjective}, "reverse": {reverse}}}'


class MockLlmClient:
    """Echo-style LLM stand-in.

    Free-text expansion requests echo back the caption being expanded;
    attribute requests return a deterministic appendix-format answer built
    from the entities carried in the job metadata.
    """

    max_in_flight = 8

    def run(self, job: GenerationJob, prompt: str | None = None) -> str:
        payload = job.payload
        metadata = payload.get("metadata", {})
        if payload.get("expected_format") == "attribute_json":
            return _mock_attribute_answer(metadata)
        return metadata.get("input_caption", prompt or payload.get("prompt", ""))


class HttpGeneratorClient:
    """POSTs image jobs to /v1/generate per the wire contract."""

    max_in_flight = 4

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.token = token
        self.timeout = timeout

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def run(self, job: GenerationJob, prompt: str | None = None) -> bytes:
        import requests

        payload = job.payload
        body: dict = {"kind": job.kind.value, "params": dict(payload.get("params", {}))}
        effective_prompt = prompt if prompt is not None else payload.get("prompt")
        if effective_prompt:
            body["prompt"] = effective_prompt
        if payload.get("regions"):
            body["regions"] = payload["regions"]
        if payload.get("width") and payload.get("height"):
            body["params"].setdefault("width", payload["width"])
            body["params"].setdefault("height", payload["height"])
        if payload.get("image"):
            body["image_b64"] = base64.b64encode(Path(payload["image"]).read_bytes()).decode("ascii")
        resp = requests.post(self.endpoint + "/v1/generate", json=body, headers=self._headers(), timeout=self.timeout)
        if resp.status_code != 200:
            raise ServiceError(f"{self.endpoint} returned {resp.status_code}: {resp.text[:200]}")
        return base64.b64decode(resp.json()["image_b64"])


class HttpLlmClient:
    """POSTs LlmText jobs to /v1/complete per the wire contract."""

    max_in_flight = 4

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.token = token
        self.timeout = timeout

    def run(self, job: GenerationJob, prompt: str | None = None) -> str:
        import requests

        payload = job.payload
        body: dict = {"prompt": prompt if prompt is not None else payload.get("prompt", "")}
        images = []
        for _, ref in payload.get("images", []):
            path = Path(ref)
            if path.is_file():
                images.append(base64.b64encode(path.read_bytes()).decode("ascii"))
        if images:
            body["images_b64"] = images
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        resp = requests.post(self.endpoint + "/v1/complete", json=body, headers=headers, timeout=self.timeout)
        if resp.status_code != 200:
            raise ServiceError(f"{self.endpoint} returned {resp.status_code}: {resp.text[:200]}")
        return resp.json()["text"]


def mock_registry() -> dict[JobKind, object]:
    mock_image = MockImageClient()
    return {
        JobKind.HFLIP: LocalFlipClient(),
        JobKind.INPAINT: mock_image,
        JobKind.BOXED_T2I: mock_image,
        JobKind.TEXT_TO_IMAGE: mock_image,
        JobKind.LLM_TEXT: MockLlmClient(),
    }


def registry_from_env(env: dict | None = None) -> dict[JobKind, object]:
    """Registry resolved from COUNTERCURATE_ENDPOINT_<KIND> variables.

    HFlip always has the local executor; an endpoint override replaces it.
    """
    env = dict(os.environ if env is None else env)
    token = env.get(ENV_TOKEN)
    timeout = float(env.get(ENV_TIMEOUT, "60"))
    registry: dict[JobKind, object] = {JobKind.HFLIP: LocalFlipClient()}
    for kind in JobKind:
        endpoint = env.get(ENV_ENDPOINT_PREFIX + kind.env_suffix)
        if not endpoint:
            continue
        if kind.is_text:
            registry[kind] = HttpLlmClient(endpoint, token=token, timeout=timeout)
        else:
            registry[kind] = HttpGeneratorClient(endpoint, token=token, timeout=timeout)
    return registry


# --- job store and dispatch --------------------------------------------------


class JobStore:
    """In-memory job table with a single-writer lock and output-dir layout."""

    def __init__(self, jobs: list[GenerationJob], out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self._order = [job.job_id for job in jobs]
        self._jobs = {job.job_id: job for job in jobs}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._jobs)

    def get(self, job_id: str) -> GenerationJob:
        return self._jobs[job_id]

    def update(self, job: GenerationJob) -> None:
        with self._lock:
            if job.job_id not in self._jobs:
                self._order.append(job.job_id)
            self._jobs[job.job_id] = job

    def jobs(self) -> list[GenerationJob]:
        return [self._jobs[jid] for jid in self._order]

    def output_rel(self, job: GenerationJob) -> str:
        ext = "txt" if job.kind.is_text else "png"
        return f"gen/{job.job_id}.{ext}"

    def output_abs(self, job: GenerationJob) -> Path:
        return self.out_dir / self.output_rel(job)

    def read_text_output(self, job_id: str) -> str:
        job = self._jobs[job_id]
        if job.status is not JobStatus.DONE or job.output_path is None:
            raise DependencyPending(f"job {job_id} has no output yet")
        return (self.out_dir / job.output_path).read_text(encoding="utf-8")


def _backoff_delay(job_id: str, attempt: int, base: float) -> float:
    # Jitter comes from a job-keyed RNG so retry timing never leaks into output.
    rng = random.Random(f"{job_id}:{attempt}")
    return base * (2**attempt) * (1.0 + rng.random())


def _resolve_image_refs(job: GenerationJob, base_dir: Path) -> GenerationJob:
    """Absolutize relative image refs (overlays) against the output directory.

    Stored payloads keep the portable relative form; only the copy handed to
    a client is resolved.
    """
    images = job.payload.get("images")
    if not images:
        return job
    resolved = []
    changed = False
    for role, ref in images:
        candidate = base_dir / ref
        if ref and not Path(ref).is_absolute() and candidate.is_file():
            resolved.append([role, str(candidate)])
            changed = True
        else:
            resolved.append([role, ref])
    if not changed:
        return job
    payload = dict(job.payload)
    payload["images"] = resolved
    return replace(job, payload=payload)


def dispatch(
    job: GenerationJob,
    registry: dict[JobKind, object],
    store: JobStore,
    backoff_base: float = 0.5,
) -> JobStatus:
    """Run one job through its client with retries; at-most-once output write.

    Done jobs whose output file exists are skipped without a client call.
    A BoxedT2I job with a `prompt_job` payload entry reads that LlmText
    job's output as its effective prompt.
    """
    if job.status is JobStatus.DONE and job.output_path and (store.out_dir / job.output_path).is_file():
        return JobStatus.DONE

    client = registry.get(job.kind)
    if client is None:
        raise ServiceError(f"no client registered for kind {job.kind.value}")

    prompt = job.payload.get("prompt")
    meta = dict(job.meta)
    prompt_job = job.payload.get("prompt_job")
    if prompt_job:
        prompt = store.read_text_output(prompt_job).strip()
        meta["resolved_prompt"] = prompt

    effective = _resolve_image_refs(job, store.out_dir)
    attempts = 0
    while True:
        attempts += 1
        try:
            result = client.run(effective, prompt=prompt)
            rel = store.output_rel(job)
            out = store.out_dir / rel
            out.parent.mkdir(parents=True, exist_ok=True)
            if isinstance(result, str):
                out.write_text(result, encoding="utf-8")
            else:
                out.write_bytes(result)
            if hasattr(client, "echo_meta"):
                meta.update(client.echo_meta(job))
            store.update(
                replace(job, status=JobStatus.DONE, output_path=rel, attempts=attempts, error=None, meta=meta)
            )
            return JobStatus.DONE
        except DependencyPending:
            raise
        except Exception as exc:  # client errors are retried unless permanent
            permanent = isinstance(exc, PermanentJobError)
            if permanent or attempts >= MAX_ATTEMPTS:
                logger.warning("job %s failed after %d attempt(s): %s", job.job_id, attempts, exc)
                store.update(replace(job, status=JobStatus.FAILED, attempts=attempts, error=str(exc), meta=meta))
                return JobStatus.FAILED
            time.sleep(_backoff_delay(job.job_id, attempts, backoff_base))


def dispatch_all(
    store: JobStore,
    registry: dict[JobKind, object],
    workers: int = 1,
    backoff_base: float = 0.5,
) -> dict[JobStatus, int]:
    """Dispatch every pending job, honoring prompt_job dependencies.

    Jobs run in waves: first all jobs whose dependencies are satisfied, then
    anything unblocked by the previous wave. Per-client concurrency is capped
    by the client's `max_in_flight`; results are deterministic regardless of
    worker count because job outputs depend only on payloads.
    """
    semaphores = {id(client): threading.Semaphore(getattr(client, "max_in_flight", 4)) for client in registry.values()}

    def ready(job: GenerationJob) -> bool:
        dep = job.payload.get("prompt_job")
        if not dep:
            return True
        try:
            return store.get(dep).status is JobStatus.DONE
        except KeyError:
            return False

    def run_one(job: GenerationJob) -> None:
        client = registry.get(job.kind)
        gate = semaphores.get(id(client))
        if gate is None:
            dispatch(job, registry, store, backoff_base=backoff_base)
            return
        with gate:
            dispatch(job, registry, store, backoff_base=backoff_base)

    while True:
        pending = [job for job in store.jobs() if job.status is JobStatus.PENDING]
        wave = [job for job in pending if ready(job)]
        if not wave:
            for job in pending:  # unresolvable dependencies
                store.update(replace(job, status=JobStatus.FAILED, error="dependency never completed"))
            break
        if workers <= 1:
            for job in wave:
                run_one(job)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run_one, wave))

    counts: dict[JobStatus, int] = {status: 0 for status in JobStatus}
    for job in store.jobs():
        counts[job.status] += 1
    return counts


# --- manifest io --------------------------------------------------------------


def load_job_manifest(path: str | Path) -> list[GenerationJob]:
    return [GenerationJob.from_json(record) for record in iter_jsonl(path)]


def save_job_manifest(path: str | Path, jobs: list[GenerationJob], header: dict | None = None) -> None:
    write_jsonl(path, (job.to_json() for job in jobs), header=header)


def merge_jobs(existing: list[GenerationJob], new: list[GenerationJob]) -> list[GenerationJob]:
    """Union by job_id, keeping any already-recorded status for known jobs."""
    known = {job.job_id for job in existing}
    merged = list(existing)
    for job in new:
        if job.job_id not in known:
            merged.append(job)
            known.add(job.job_id)
    return merged
