from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .config import AdapterConfig
from .run import choose_items, score_items


def _config(model, items, image_root, out, batch_size, device) -> AdapterConfig:
    return AdapterConfig(
        model=model,
        items_path=Path(items),
        image_root=Path(image_root),
        output_path=Path(out),
        batch_size=batch_size,
        device=device,
    )


@click.group()
def cli():
    """Score countercurate benchmark items with a real (or baseline) model."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


shared_options = [
    click.option("--model", default="builtin-tiny", show_default=True),
    click.option("--items", type=click.Path(exists=True), required=True),
    click.option("--image-root", type=click.Path(), required=True),
    click.option("--out", type=click.Path(), required=True),
    click.option("--batch-size", type=int, default=16, show_default=True),
    click.option("--device", default="cpu", show_default=True),
]


def with_shared(fn):
    for option in reversed(shared_options):
        fn = option(fn)
    return fn


@cli.command()
@with_shared
def score(model, items, image_root, out, batch_size, device):
    """Write a contrastive score file (cosine similarities per pair)."""
    stats = score_items(_config(model, items, image_root, out, batch_size, device))
    click.echo(f"scored {stats.scored} item(s) -> {out}")
    if stats.partial:
        click.echo(f"partial: {len(stats.missing_images)} item(s) skipped (missing images)", err=True)


@cli.command()
@with_shared
def choose(model, items, image_root, out, batch_size, device):
    """Write a choice file from two-option multiple-choice answers."""
    stats = choose_items(_config(model, items, image_root, out, batch_size, device))
    click.echo(f"answered {stats.scored} item(s) -> {out}")
    if stats.parse_failures:
        click.echo(f"{stats.parse_failures} unparseable answer(s) recorded as negative", err=True)
    if stats.partial:
        click.echo(f"partial: {len(stats.missing_images)} item(s) skipped (missing images)", err=True)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)


if __name__ == "__main__":
    main()
