"""Cross-entropy and focal loss over softmax probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOG_P_FLOOR = float(np.log(1e-12))


@dataclass
class FocalLossParams:
    alpha: Optional[np.ndarray] = None  # per-class weights; None means all ones
    gamma: float = 2.0
    reduction: str = "mean"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if (self.alpha < 0).any():
                raise ValueError("alpha entries must be nonnegative")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"unknown reduction {self.reduction!r}")


def _check_labels(logits: Tensor, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B, K = logits.shape
    if labels.shape[0] != B:
        raise ValueError(f"{labels.shape[0]} labels for a batch of {B}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"label out of range [0, {K})")
    return labels


def true_class_log_prob(logits: Tensor, labels: np.ndarray) -> Tensor:
    """log softmax(logits)[i, labels[i]] as a (B,) tensor."""
    B, K = logits.shape
    logp = T.log_softmax(logits, axis=-1)
    picked = T.gather_rows(T.reshape(logp, (B * K, 1)), np.arange(B) * K + labels)
    return T.reshape(picked, (B,))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = _check_labels(logits, labels)
    return T.mul(T.mean(true_class_log_prob(logits, labels)), -1.0)


def focal_loss(logits: Tensor, labels, params: Optional[FocalLossParams] = None) -> Tensor:
    """-alpha_t (1 - p_t)^gamma log p_t per sample, p_t clamped to [1e-12, 1] inside the log."""
    params = params or FocalLossParams()
    labels = _check_labels(logits, labels)
    K = logits.shape[1]
    logp = true_class_log_prob(logits, labels)
    nll = T.mul(T.clip(logp, LOG_P_FLOOR, 0.0), -1.0)
    if params.gamma != 0:
        modulator = T.power(T.sub(1.0, T.exp(logp)), params.gamma)
        per_sample = T.mul(modulator, nll)
    else:
        per_sample = nll
    if params.alpha is not None:
        if params.alpha.shape != (K,):
            raise ValueError(f"alpha has {params.alpha.shape[0]} entries for {K} classes")
        per_sample = T.mul(per_sample, params.alpha[labels])
    return T.mean(per_sample) if params.reduction == "mean" else T.sum_(per_sample)


def alpha_from_distribution(counts: Sequence[int], scheme: str = "inverse_frequency") -> np.ndarray:
    """Per-class weights. ``inverse_frequency``: N/(K count_t) rescaled to mean 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a nonempty 1-d sequence")
    if (counts < 1).any():
        raise ValueError("every class needs at least one sample")
    if scheme == "uniform":
        return np.ones_like(counts)
    if scheme != "inverse_frequency":
        raise ValueError(f"unknown alpha scheme {scheme!r}")
    raw = counts.sum() / (counts.size * counts)
    return raw / raw.mean()
