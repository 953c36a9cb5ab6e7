"""Transformer encoder over the batch axis, plus the shared-classifier dual stream.

Each sample's pooled feature vector is one token of a length-B sequence.
There is no positional encoding, so the encoder is permutation equivariant
in the batch. During training the shared classifier scores both the raw
features and the encoded ones; at inference only the raw stream exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .gradcheck import CheckReport
from .nn import LayerNorm, Linear, Mlp, Module
from .swin import Attention
from .tensor import ShapeError, Tensor


@dataclass
class BatchFormerConfig:
    enabled: bool = True
    feature_dim: int = 128
    heads: int = 4
    mlp_ratio: float = 2.0
    layers: int = 1
    enabled_at_eval: bool = False

    def __post_init__(self):
        if self.feature_dim % self.heads:
            raise ValueError(f"feature_dim {self.feature_dim} not divisible by {self.heads} heads")
        if self.enabled and self.layers < 1:
            raise ValueError("BatchFormer needs at least one layer when enabled")
        if self.enabled_at_eval:
            raise ValueError("enabled_at_eval would make predictions depend on batch composition")


class EncoderLayer(Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator,
                 zero_init_residual: bool = False):
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng, zero_init_proj=zero_init_residual)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, zero_init_out=zero_init_residual)

    def forward(self, x: Tensor) -> Tensor:
        x = T.add(x, self.attn(self.norm1(x)))
        return T.add(x, self.mlp(self.norm2(x)))


class BatchFormer(Module):
    def __init__(self, cfg: BatchFormerConfig, rng: np.random.Generator, zero_init_residual: bool = False):
        self.cfg = cfg
        self.layers = [
            EncoderLayer(cfg.feature_dim, cfg.heads, cfg.mlp_ratio, rng, zero_init_residual)
            for _ in range(cfg.layers)
        ]

    def forward(self, features: Tensor) -> Tensor:
        if features.ndim != 2 or features.shape[1] != self.cfg.feature_dim:
            raise ShapeError(f"BatchFormer expects (B, {self.cfg.feature_dim}), got {features.shape}")
        B, F = features.shape
        x = T.reshape(features, (1, B, F))
        for layer in self.layers:
            x = layer(x)
        return T.reshape(x, (B, F))


def batchformer_forward(features: Tensor, bf: BatchFormer) -> Tensor:
    return bf(features)


def dual_stream_logits(
    features: Tensor,
    classifier: Callable[[Tensor], Tensor],
    bf: Optional[BatchFormer],
    training: bool,
) -> tuple[Tensor, Optional[Tensor]]:
    """(plain logits, BatchFormer-stream logits or None)."""
    plain = classifier(features)
    if not training or bf is None or not bf.cfg.enabled:
        return plain, None
    return plain, classifier(bf(features))


def dual_stream_loss(loss_fn, plain: Tensor, bf_logits: Optional[Tensor], labels) -> Tensor:
    """Unweighted mean of the two stream losses; the plain loss when the BatchFormer stream is absent."""
    base = loss_fn(plain, labels)
    if bf_logits is None:
        return base
    return T.mul(T.add(base, loss_fn(bf_logits, labels)), 0.5)


def equivariance_check(features, permutation, bf: BatchFormer, tol: float = 1e-9) -> CheckReport:
    """max |bf(P x) - P bf(x)| over all entries."""
    x = np.asarray(features.data if isinstance(features, Tensor) else features, dtype=np.float64)
    perm = np.asarray(permutation)
    if sorted(perm.tolist()) != list(range(x.shape[0])):
        raise ValueError(f"{perm.tolist()} is not a permutation of range({x.shape[0]})")
    with T.no_grad():
        a = bf(Tensor(x[perm])).data
        b = bf(Tensor(x)).data[perm]
    err = float(np.abs(a - b).max()) if a.size else 0.0
    return CheckReport("batchformer-equivariance", err, tol, int(a.size))
