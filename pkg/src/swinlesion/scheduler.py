"""Reduce-on-plateau learning-rate control as a pure state transition."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class SchedulerState:
    lr: float
    best: float = math.inf
    patience: int = 5
    counter: int = 0
    factor: float = 0.1
    min_lr: float = 1e-6
    threshold: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"factor must lie in (0, 1), got {self.factor}")
        if self.patience < 0 or self.threshold < 0:
            raise ValueError("patience and threshold must be nonnegative")
        if self.lr < self.min_lr:
            raise ValueError(f"lr {self.lr} below min_lr {self.min_lr}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["best"] = None if math.isinf(self.best) else self.best
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulerState":
        d = dict(d)
        if d.get("best") is None:
            d["best"] = math.inf
        return cls(**d)


def scheduler_step(state: SchedulerState, val_loss: float) -> SchedulerState:
    if not math.isfinite(val_loss):
        raise ValueError(f"non-finite validation loss {val_loss}")
    if val_loss < state.best - state.threshold:
        return dataclasses.replace(state, best=val_loss, counter=0)
    counter = state.counter + 1
    if counter > state.patience:
        return dataclasses.replace(state, lr=max(state.lr * state.factor, state.min_lr), counter=0)
    return dataclasses.replace(state, counter=counter)


def trace(state0: SchedulerState, losses: Iterable[float]) -> list[float]:
    """Learning rate after each step of folding ``losses`` through the scheduler."""
    out = []
    state = state0
    for loss in losses:
        state = scheduler_step(state, loss)
        out.append(state.lr)
    return out
