"""Stratified train/validation/test partition with largest-remainder rounding."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


class SplitError(ValueError):
    pass


@dataclass
class SplitPlan:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def indices(self, split: str) -> list[int]:
        return getattr(self, split)

    def split_of(self) -> dict[int, str]:
        return {i: s for s in SPLITS for i in self.indices(s)}


def _exact(f: float) -> Fraction:
    return Fraction(str(f))


def allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``n`` items; ties go to the earlier split."""
    quotas = [n * _exact(f) for f in fractions]
    base = [int(q) for q in quotas]  # floor; quotas are nonnegative
    left = n - sum(base)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def check_fractions(fractions: Sequence[float]) -> tuple[float, ...]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise SplitError(f"need three nonnegative fractions, got {fractions}")
    if sum(_exact(f) for f in fractions) != 1:
        raise SplitError(f"fractions must sum to 1, got {fractions} (sum {sum(fractions)})")
    return fractions


def stratified_split(labels: Sequence[int], fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitPlan:
    """Per-class seeded shuffle, then proportional allocation per class."""
    fractions = check_fractions(fractions)
    labels = np.asarray(labels, dtype=np.int64)
    parts: dict[str, list[int]] = {s: [] for s in SPLITS}
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < len(SPLITS):
            raise SplitError(f"class {cls} has {members.size} samples; at least 3 are needed to populate all splits")
        rng = np.random.default_rng([seed, int(cls)])
        members = members[rng.permutation(members.size)]
        start = 0
        for split, n in zip(SPLITS, allocate(members.size, fractions)):
            parts[split].extend(int(i) for i in members[start:start + n])
            start += n
    return SplitPlan(*(sorted(parts[s]) for s in SPLITS), seed=seed, fractions=fractions)


# -- manifest files --------------------------------------------------------------
@dataclass
class ManifestRow:
    index: int
    image: str
    cls: int
    split: str


def write_split_manifest(path, plan: SplitPlan, records: Sequence[tuple[str, int]],
                         meta: Optional[dict] = None) -> None:
    """CSV ``index,image,class,split``; a leading ``#`` line carries provenance JSON."""
    where = plan.split_of()
    with Path(path).open("w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "image", "class", "split"])
        for i, (name, cls) in enumerate(records):
            if i in where:
                w.writerow([i, name, cls, where[i]])


def read_manifest_meta(path) -> dict:
    with Path(path).open() as fh:
        first = fh.readline()
    return json.loads(first[2:]) if first.startswith("# ") else {}


def read_split_manifest(path) -> list[ManifestRow]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != ["index", "image", "class", "split"]:
        raise SplitError(f"{path}: expected header index,image,class,split")
    rows = []
    for r in reader:
        if r["split"] not in SPLITS:
            raise SplitError(f"{path}: unknown split {r['split']!r}")
        rows.append(ManifestRow(int(r["index"]), r["image"], int(r["class"]), r["split"]))
    return rows
