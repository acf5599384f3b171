"""Line-delimited JSON manifests with a provenance header line.

Every artifact the pipeline writes is a JSONL file whose first line is a
header record ``{"_header": {...}}`` carrying the config that produced it.
Readers skip the header transparently. Record dicts are written with their
insertion key order so identical runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def content_id(*parts: Any, length: int = 16) -> str:
    """Deterministic hex id from JSON-serializable parts."""
    blob = json.dumps(list(parts), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:length]


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path: str | Path, records: Iterable[dict], header: dict | None = None) -> int:
    """Write records to `path`; returns the number of data records written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(dumps_record({"_header": header}) + "\n")
        for record in records:
            fh.write(dumps_record(record) + "\n")
            n += 1
    return n


def iter_jsonl(path: str | Path, skip_header: bool = True) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if skip_header and isinstance(record, dict) and "_header" in record:
                continue
            yield record


def read_header(path: str | Path) -> dict | None:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    record = json.loads(first)
    if isinstance(record, dict) and "_header" in record:
        return record["_header"]
    return None
