"""Accuracy, confusion matrix and per-class precision/recall."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def predictions(logits: np.ndarray) -> np.ndarray:
    """Argmax over classes; ties resolve to the lowest class index."""
    return np.argmax(logits, axis=1)


def confusion_matrix(labels: np.ndarray, preds: np.ndarray, num_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(preds)), 1)
    return cm


@dataclass
class SplitMetrics:
    accuracy: float
    confusion: list[list[int]]
    precision: list[float]
    recall: list[float]
    support: list[int]
    loss: Optional[float] = None

    @classmethod
    def from_logits(cls, logits: np.ndarray, labels: np.ndarray, num_classes: int,
                    loss: Optional[float] = None) -> "SplitMetrics":
        cm = confusion_matrix(labels, predictions(logits), num_classes)
        tp = np.diag(cm).astype(np.float64)
        support = cm.sum(axis=1)
        predicted = cm.sum(axis=0)
        recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
        precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
        total = int(cm.sum())
        return cls(
            accuracy=float(tp.sum() / total) if total else 0.0,
            confusion=cm.tolist(),
            precision=precision.tolist(),
            recall=recall.tolist(),
            support=support.tolist(),
            loss=loss,
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float

    def line(self) -> str:
        return (f"epoch={self.epoch} train_loss={self.train_loss:.6f} val_loss={self.val_loss:.6f} "
                f"val_acc={self.val_acc:.4f} lr={self.lr:.3e}")


@dataclass
class MetricsReport:
    class_names: list[str]
    splits: dict[str, SplitMetrics] = field(default_factory=dict)
    history: list[EpochRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def accuracy(self, split: str) -> float:
        return self.splits[split].accuracy

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "splits": {k: asdict(v) for k, v in self.splits.items()},
            "history": [asdict(h) for h in self.history],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            class_names=list(d["class_names"]),
            splits={k: SplitMetrics(**v) for k, v in d.get("splits", {}).items()},
            history=[EpochRecord(**h) for h in d.get("history", [])],
            config=d.get("config", {}),
        )

    def write(self, out_dir, stem: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        for split, m in self.splits.items():
            write_confusion_csv(out / f"{stem}_confusion_{split}.csv", m.confusion, self.class_names)


def write_confusion_csv(path, confusion: Sequence[Sequence[int]], class_names: Sequence[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *class_names])
        for name, row in zip(class_names, confusion):
            w.writerow([name, *row])
