"""{CE, focal} x {BatchFormer off, on} comparison on a synthetic long-tailed dataset."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig, from_dict
from .data.split import stratified_split
from .data.synthetic import class_images, long_tail_counts
from .engine import ImageSet, TrainData, train

HARNESS_BASE = {
    "model": {"image_size": 32, "patch_size": 4, "embed_dim": 16, "depths": [1, 1, 1, 1],
              "num_heads": [2, 2, 4, 4], "window_size": 4, "num_classes": 4},
    "batchformer": {"heads": 4},
    "train": {"epochs": 12, "batch_size": 16},
    "sched": {"patience": 2},
}


@dataclass
class AblationRun:
    loss: str
    batchformer: bool
    seed: int
    recall: list[float]
    accuracy: float


@dataclass
class AblationResult:
    class_names: list[str]
    counts: list[int]
    runs: list[AblationRun] = field(default_factory=list)

    def variants(self) -> list[tuple[str, bool]]:
        seen = []
        for r in self.runs:
            if (r.loss, r.batchformer) not in seen:
                seen.append((r.loss, r.batchformer))
        return seen

    def mean_recall(self, loss: str, batchformer: bool) -> np.ndarray:
        rows = [r.recall for r in self.runs if r.loss == loss and r.batchformer == batchformer]
        return np.mean(rows, axis=0)

    def table(self) -> str:
        head = ["loss", "batchformer", *(f"recall.{c}(n={n})" for c, n in zip(self.class_names, self.counts)),
                "acc"]
        lines = [" | ".join(head)]
        for loss, bf in self.variants():
            rec = self.mean_recall(loss, bf)
            acc = np.mean([r.accuracy for r in self.runs if r.loss == loss and r.batchformer == bf])
            lines.append(" | ".join([loss, "on" if bf else "off", *(f"{v:.3f}" for v in rec), f"{acc:.3f}"]))
        return "\n".join(lines)


def long_tail_data(seed: int, num_classes: int = 4, head: int = 160, ratio: float = 10.0, size: int = 32,
                   separation: float = 0.2, noise: float = 0.15) -> tuple[TrainData, list[int]]:
    counts = long_tail_counts(num_classes, head, ratio)
    images, labels = class_images(counts, size=size, seed=seed, noise=noise, separation=separation)
    plan = stratified_split(labels, seed=seed)
    full = ImageSet(images, labels)
    names = [f"C{k}" for k in range(num_classes)]
    return TrainData(full.subset(plan.train), full.subset(plan.val), full.subset(plan.test), names), counts


def run_ablation(seeds: Sequence[int] = (0, 1, 2), base: Optional[dict] = None, epochs: Optional[int] = None,
                 num_classes: int = 4, head: int = 160, ratio: float = 10.0) -> AblationResult:
    result: Optional[AblationResult] = None
    for seed in seeds:
        cfg_dict = {**HARNESS_BASE, **(base or {})}
        cfg_dict = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg_dict.items()}
        cfg_dict["model"]["num_classes"] = num_classes
        size = cfg_dict["model"]["image_size"]
        data, counts = long_tail_data(seed, num_classes, head, ratio, size)
        if result is None:
            result = AblationResult(list(data.class_names), counts)
        for loss, bf in itertools.product(("ce", "focal"), (False, True)):
            d = {**cfg_dict, "seed": seed}
            d["loss"] = {**d.get("loss", {}), "kind": loss}
            d["batchformer"] = {**d.get("batchformer", {}), "enabled": bf}
            if epochs is not None:
                d["train"] = {**d["train"], "epochs": epochs}
            cfg: ExperimentConfig = from_dict(d)
            _, report = train(data, cfg)
            test = report.splits["test"]
            result.runs.append(AblationRun(loss, bf, seed, list(test.recall), test.accuracy))
    return result
