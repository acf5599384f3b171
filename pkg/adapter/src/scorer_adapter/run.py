"""Score and choice runs over countercurate benchmark item files.

Item files are line-delimited JSON (a `_header` first line is skipped) with
fields item_id, C, Cn, image, image_neg (nullable) and option_order. Output
files match the harness schemas byte-for-byte:

    scores:  {"item_id", "s_CI", "s_CnI", "s_CIn"?, "s_CnIn"?}
    choices: {"item_id", "chosen": "positive"|"negative", "parse_failure"?}

Choice runs render the same two-option conversation template the pipeline
trains with, honoring each item's recorded option order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .config import AdapterConfig
from .models import load_contrastive, load_generative, parse_choice_letter

logger = logging.getLogger(__name__)

CONVERSATION_PROMPT = "Which caption better describes the image?\nA) {option_a}\nB) {option_b}\nAnswer with A or B."


@dataclass
class RunStats:
    scored: int = 0
    missing_images: list[str] = field(default_factory=list)
    parse_failures: int = 0

    @property
    def partial(self) -> bool:
        return bool(self.missing_images)


def iter_items(path: Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "_header" in record:
                continue
            yield record


def _batched(seq: list, size: int) -> Iterator[list]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def score_items(config: AdapterConfig) -> RunStats:
    """Cosine-score every item pair and write the score file."""
    model = load_contrastive(config.model, device=config.device)
    stats = RunStats()
    items = []
    for item in iter_items(config.items_path):
        image = config.resolve(item["image"])
        if not image.is_file():
            stats.missing_images.append(item["item_id"])
            continue
        image_neg = None
        if item.get("image_neg"):
            candidate = config.resolve(item["image_neg"])
            if candidate.is_file():
                image_neg = candidate
            else:
                stats.missing_images.append(item["item_id"])
                continue
        items.append((item, image, image_neg))

    config.output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config.output_path, "w", encoding="utf-8") as fh:
        for batch in _batched(items, config.batch_size):
            texts = []
            images = []
            for item, image, image_neg in batch:
                texts.extend([item["C"], item["Cn"]])
                images.append(image)
                if image_neg is not None:
                    images.append(image_neg)
            text_vecs = model.embed_texts(texts)
            image_vecs = model.embed_images(images)
            text_row = 0
            image_row = 0
            for item, _, image_neg in batch:
                sims = model.similarity(text_vecs[text_row : text_row + 2], image_vecs[image_row : image_row + (2 if image_neg else 1)])
                record = {
                    "item_id": item["item_id"],
                    "s_CI": round(float(sims[0, 0]), 6),
                    "s_CnI": round(float(sims[1, 0]), 6),
                }
                if image_neg is not None:
                    record["s_CIn"] = round(float(sims[0, 1]), 6)
                    record["s_CnIn"] = round(float(sims[1, 1]), 6)
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                stats.scored += 1
                text_row += 2
                image_row += 2 if image_neg else 1

    if stats.partial:
        logger.warning("partial output: %d item(s) skipped for missing images: %s",
                       len(stats.missing_images), ", ".join(stats.missing_images[:10]))
    return stats


def render_choice_prompt(item: dict) -> str:
    order = item.get("option_order") or ["positive", "negative"]
    option_a = item["C"] if order[0] == "positive" else item["Cn"]
    option_b = item["Cn"] if order[0] == "positive" else item["C"]
    return CONVERSATION_PROMPT.format(option_a=option_a, option_b=option_b)


def choose_items(config: AdapterConfig) -> RunStats:
    """Ask a generative model to pick A or B per item; write the choice file."""
    model = load_generative(config.model, device=config.device)
    stats = RunStats()
    config.output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config.output_path, "w", encoding="utf-8") as fh:
        for item in iter_items(config.items_path):
            image = config.resolve(item["image"])
            if not image.is_file():
                stats.missing_images.append(item["item_id"])
                continue
            prompt = render_choice_prompt(item)
            answer = model.generate(prompt, image)
            letter = parse_choice_letter(answer)
            order = item.get("option_order") or ["positive", "negative"]
            record: dict = {"item_id": item["item_id"]}
            if letter is None:
                # refusals and garbage count as wrong under the strict protocol
                record["chosen"] = "negative"
                record["parse_failure"] = True
                stats.parse_failures += 1
            else:
                record["chosen"] = order[0] if letter == "A" else order[1]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            stats.scored += 1
    if stats.partial:
        logger.warning("partial output: %d item(s) skipped for missing images", len(stats.missing_images))
    return stats
