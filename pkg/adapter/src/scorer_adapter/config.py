from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass
class AdapterConfig:
    """Settings for one scoring or choosing run.

    `model` picks from the registry: "builtin-tiny" is always available;
    "hf:<model_id>" loads a CLIP-style checkpoint via transformers when that
    stack is installed. `image_root` resolves the relative image refs found
    in item files (normally the pipeline output directory).
    """

    model: str
    items_path: Path
    image_root: Path
    output_path: Path
    batch_size: int = 16
    device: str = "cpu"

    def resolve(self, ref: str) -> Path:
        path = Path(ref)
        return path if path.is_absolute() else self.image_root / path
