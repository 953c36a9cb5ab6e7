"""Ground-truth ingestion and class-distribution statistics."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .imageio import read_image, resolve_image, to_float

ISIC2019_CLASSES = ("MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC")


class DatasetError(ValueError):
    pass


@dataclass
class LabeledDataset:
    records: list[tuple[str, int]]
    class_names: tuple[str, ...] = ISIC2019_CLASSES
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([c for _, c in self.records], dtype=np.int64)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.records]

    def image_path(self, i: int) -> Path:
        if self.root is None:
            raise DatasetError("dataset has no root directory")
        return resolve_image(self.root, self.records[i][0])

    def load(self, i: int) -> np.ndarray:
        """Image ``i`` as float64 (H, W, 3) in [0, 1]."""
        return to_float(read_image(self.image_path(i)))


def load_ground_truth(csv_path, root=None, check_files: bool = True) -> LabeledDataset:
    """Read an ISIC-style one-hot CSV: ``image,<class columns...>``.

    A trailing ``UNK`` column (present in the official 2019 file) is accepted
    when it is zero on every row and dropped.
    """
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise DatasetError(f"{csv_path}: empty dataset")
    header = [h.strip() for h in rows[0]]
    if header[0] != "image" or len(header) < 3:
        raise DatasetError(f"{csv_path}: header must be 'image,<class>,<class>,...'")
    classes = header[1:]
    drop_unk = classes[-1] == "UNK"
    if drop_unk:
        classes = classes[:-1]
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DatasetError(f"{csv_path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DatasetError(f"{csv_path}:{lineno}: non-numeric label") from exc
        if drop_unk:
            if values[-1] != 0.0:
                raise DatasetError(f"{csv_path}:{lineno}: UNK-labelled rows are not supported")
            values = values[:-1]
        hot = [i for i, v in enumerate(values) if v == 1.0]
        if len(hot) != 1 or any(v not in (0.0, 1.0) for v in values):
            raise DatasetError(f"{csv_path}:{lineno}: row must be one-hot, got {row[1:]}")
        records.append((row[0].strip(), hot[0]))
    if not records:
        raise DatasetError(f"{csv_path}: empty dataset")
    ds = LabeledDataset(records, tuple(classes), Path(root) if root is not None else None)
    if check_files and ds.root is not None:
        for i in range(len(ds)):
            ds.image_path(i)
    return ds


def write_ground_truth(path, records: Sequence[tuple[str, int]], class_names=ISIC2019_CLASSES) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", *class_names])
        for name, cls in records:
            w.writerow([name, *("1.0" if k == cls else "0.0" for k in range(len(class_names)))])


@dataclass
class ClassStats:
    class_names: tuple[str, ...]
    counts: list[int]
    mean: float = field(init=False)
    median: float = field(init=False)

    def __post_init__(self):
        self.mean = float(statistics.fmean(self.counts))
        self.median = float(statistics.median(self.counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.class_names, self.counts))


def compute_stats(ds: LabeledDataset) -> ClassStats:
    if len(ds) == 0:
        raise DatasetError("empty dataset")
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    return ClassStats(tuple(ds.class_names), [int(c) for c in counts])


def format_stats_report(stats: ClassStats, extra: Optional[dict] = None) -> str:
    lines = [f"total = {stats.total}", f"num_classes = {len(stats.counts)}"]
    lines += [f"count.{name} = {c}" for name, c in zip(stats.class_names, stats.counts)]
    lines += [f"mean = {stats.mean!r}", f"median = {stats.median!r}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_stats_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if "=" in line and not line.startswith("#"):
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
