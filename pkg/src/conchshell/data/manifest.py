"""Deterministic train/validation manifests for category-foldered corpora."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
AUDIO_SUFFIX = ".wav"
NUM_CATEGORIES = 6


@dataclass(frozen=True)
class ManifestItem:
    image_path: str
    audio_path: str
    category_id: int
    split: str

    @property
    def item_id(self) -> str:
        return Path(self.image_path).with_suffix("").as_posix()


@dataclass
class DatasetManifest:
    items: list[ManifestItem]
    seed: int
    split_ratio: float
    root: str = ""
    categories: list[str] = field(default_factory=list)

    def split(self, name: str) -> list[ManifestItem]:
        return [it for it in self.items if it.split == name]

    @property
    def train(self) -> list[ManifestItem]:
        return self.split("train")

    @property
    def val(self) -> list[ManifestItem]:
        return self.split("val")

    def resolve(self, rel: str) -> Path:
        return Path(self.root) / rel

    def to_text(self) -> str:
        header = {"root": self.root, "seed": self.seed, "split_ratio": self.split_ratio,
                  "categories": self.categories}
        lines = [json.dumps(header, sort_keys=True)]
        for it in self.items:
            lines.append(json.dumps({"image": it.image_path, "audio": it.audio_path,
                                     "category": it.category_id, "split": it.split}))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            header = json.loads(lines[0])
            items = [ManifestItem(r["image"], r["audio"], int(r["category"]), r["split"])
                     for r in map(json.loads, lines[1:]) if r]
        except (OSError, IndexError, KeyError, ValueError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        return cls(items, header["seed"], header["split_ratio"], header.get("root", ""),
                   header.get("categories", []))


def train_count(n: int, split_ratio: float) -> int:
    # guard against 0.85 * 3000 landing a hair under 2550
    return min(n, math.floor(split_ratio * n + 1e-9))


def build_manifest(root_dir, split_ratio: float = 0.85, seed: int = 0) -> DatasetManifest:
    """Pair images with same-stem WAVs per category folder, shuffle, and split.

    Category ids follow the lexicographic order of the subdirectory names.
    """
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    root = Path(root_dir)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a directory")
    categories = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(categories) > NUM_CATEGORIES:
        raise DataError(f"found {len(categories)} category folders, at most {NUM_CATEGORIES} allowed")

    pairs = []
    for cat_id, cat in enumerate(categories):
        folder = root / cat
        images = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for img in images:
            audio = img.with_suffix(AUDIO_SUFFIX)
            if not audio.is_file():
                raise DataError(f"image without audio pair: {img.relative_to(root).as_posix()}")
            pairs.append((img.relative_to(root).as_posix(), audio.relative_to(root).as_posix(), cat_id))
    if not pairs:
        raise DataError("empty corpus")

    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = train_count(len(pairs), split_ratio)
    items = [ManifestItem(*pairs[j], "train" if rank < n_train else "val")
             for rank, j in enumerate(order)]
    return DatasetManifest(items, seed, split_ratio, str(root.resolve()), categories)
