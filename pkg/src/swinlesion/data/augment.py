"""Targeted elastic augmentation of under-represented classes in the training split."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .elastic import elastic_deform, sample_deformation

AUG_FIELDS = ["source", "seed", "transform", "params", "output_path"]


@dataclass
class AugEntry:
    source: int          # dataset index of the training image
    seed: int
    transform: str
    params: dict
    output_path: str
    label: int

    def row(self, source_name: str) -> list:
        return [source_name, self.seed, self.transform, json.dumps(self.params, sort_keys=True), self.output_path]


def variant_seed(root_seed: int, source: int, k: int) -> int:
    return int(np.random.SeedSequence([root_seed, source, k]).generate_state(1, np.uint32)[0])


def selective_augment(
    labels: Sequence[int],
    train_indices: Sequence[int],
    threshold: int = 2000,
    multiplier: int = 2,
    seed: int = 0,
    sigma: float = 8.0,
    alpha: float = 12.0,
    names: Optional[Sequence[str]] = None,
) -> list[AugEntry]:
    """Plan ``multiplier - 1`` deformed copies of every training image whose
    class has fewer than ``threshold`` training samples."""
    if multiplier < 1:
        raise ValueError(f"multiplier must be >= 1, got {multiplier}")
    labels = np.asarray(labels, dtype=np.int64)
    train = np.asarray(sorted(train_indices), dtype=np.int64)
    counts = np.bincount(labels[train], minlength=int(labels.max()) + 1 if labels.size else 0)
    entries = []
    for i in train:
        cls = int(labels[i])
        if counts[cls] >= threshold:
            continue
        stem = Path(names[i]).stem if names is not None else f"{i:06d}"
        for k in range(1, multiplier):
            entries.append(AugEntry(
                source=int(i),
                seed=variant_seed(seed, int(i), k),
                transform="elastic",
                params={"sigma": sigma, "alpha": alpha},
                output_path=f"{stem}_elastic{k}.ppm",
                label=cls,
            ))
    return entries


def render(entry: AugEntry, image: np.ndarray) -> np.ndarray:
    field = sample_deformation(image.shape[:2], entry.params["sigma"], entry.params["alpha"], entry.seed)
    return elastic_deform(image, field)


def materialize(entries: Sequence[AugEntry], load: Callable[[int], np.ndarray]) -> np.ndarray:
    """Render every planned variant; ``load(i)`` returns source image i as float (H, W, 3)."""
    return np.stack([render(e, load(e.source)) for e in entries]) if entries else np.zeros((0,))


def write_aug_manifest(path, entries: Sequence[AugEntry], names: Sequence[str], meta: Optional[dict] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUG_FIELDS)
        for e in entries:
            w.writerow(e.row(names[e.source]))


def read_aug_manifest(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != AUG_FIELDS:
        raise ValueError(f"{path}: expected header {','.join(AUG_FIELDS)}")
    rows = list(reader)
    for r in rows:
        r["seed"] = int(r["seed"])
        r["params"] = json.loads(r["params"])
    return rows
