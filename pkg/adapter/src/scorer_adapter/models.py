"""Model registry: a dependency-free baseline plus optional HF CLIP loading.

The builtin model embeds captions as hashed character trigrams and images as
downsampled grayscale intensity maps, both L2-normalized into the same
256-dimensional space. It is not a good vision-language model; it is a
deterministic, always-available one, which is what schema and protocol
plumbing needs. Real evaluations should point at "hf:<clip_model_id>".
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np
from PIL import Image

EMBED_DIM = 256

_LETTER_RE = re.compile(r"\b([AB])\b")


def parse_choice_letter(text: str) -> str | None:
    """First standalone A or B in the model output, or None."""
    match = _LETTER_RE.search(text)
    return match.group(1) if match else None


class TinyContrastiveModel:
    """Deterministic featurizer with a CLIP-like embed-and-cosine interface."""

    name = "builtin-tiny"

    def __init__(self, device: str = "cpu"):
        self.device = device  # accepted for interface parity; unused

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), EMBED_DIM), dtype=np.float64)
        for row, text in enumerate(texts):
            padded = f"  {text.lower()}  "
            for i in range(len(padded) - 2):
                trigram = padded[i : i + 3]
                digest = hashlib.md5(trigram.encode("utf-8")).digest()
                out[row, digest[0]] += 1.0
        return _normalize(out)

    def embed_images(self, paths: list[Path]) -> np.ndarray:
        out = np.zeros((len(paths), EMBED_DIM), dtype=np.float64)
        for row, path in enumerate(paths):
            with Image.open(path) as img:
                gray = img.convert("L").resize((16, 16), Image.Resampling.BILINEAR)
            out[row] = np.asarray(gray, dtype=np.float64).reshape(-1)
        return _normalize(out)

    def similarity(self, text_vecs: np.ndarray, image_vecs: np.ndarray) -> np.ndarray:
        return text_vecs @ image_vecs.T


class TinyChooser:
    """Generative stand-in: answers A/B by comparing option embeddings."""

    name = "builtin-tiny"

    def __init__(self, device: str = "cpu"):
        self.backbone = TinyContrastiveModel(device=device)

    def generate(self, prompt: str, image_path: Path) -> str:
        options = {}
        for line in prompt.split("\n"):
            if line.startswith("A) "):
                options["A"] = line[3:]
            elif line.startswith("B) "):
                options["B"] = line[3:]
        if set(options) != {"A", "B"}:
            return "I cannot find the options."
        texts = self.backbone.embed_texts([options["A"], options["B"]])
        image = self.backbone.embed_images([image_path])
        scores = self.backbone.similarity(texts, image).reshape(-1)
        return "A" if scores[0] >= scores[1] else "B"


class HfClipModel:
    """CLIP checkpoint via transformers; available only when that stack is installed."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise RuntimeError(f"transformers/torch not installed; cannot load {model_id}") from exc
        self.name = model_id
        self.torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)

    def embed_texts(self, texts: list[str]) -> np.ndarray:  # pragma: no cover - needs weights
        inputs = self.processor(text=texts, return_tensors="pt", padding=True, truncation=True).to(self.device)
        with self.torch.no_grad():
            features = self.model.get_text_features(**inputs)
        return _normalize(features.cpu().numpy())

    def embed_images(self, paths: list[Path]) -> np.ndarray:  # pragma: no cover - needs weights
        images = [Image.open(p).convert("RGB") for p in paths]
        inputs = self.processor(images=images, return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            features = self.model.get_image_features(**inputs)
        return _normalize(features.cpu().numpy())

    def similarity(self, text_vecs: np.ndarray, image_vecs: np.ndarray) -> np.ndarray:
        return text_vecs @ image_vecs.T


def _normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def load_contrastive(name: str, device: str = "cpu"):
    if name == "builtin-tiny":
        return TinyContrastiveModel(device=device)
    if name.startswith("hf:"):
        return HfClipModel(name[3:], device=device)
    raise ValueError(f"unknown contrastive model {name!r}; use builtin-tiny or hf:<model_id>")


def load_generative(name: str, device: str = "cpu"):
    if name == "builtin-tiny":
        return TinyChooser(device=device)
    raise ValueError(f"unknown generative model {name!r}; builtin-tiny is the only bundled one")
