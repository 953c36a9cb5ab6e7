"""Backbone + optional BatchFormer sharing one classification head."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import tensor as T
from .batchformer import BatchFormer, BatchFormerConfig, dual_stream_logits
from .nn import Module
from .swin import SwinConfig, SwinTransformer
from .tensor import Tensor

BATCHFORMER_PREFIX = "batchformer."


class LesionClassifier(Module):
    def __init__(self, swin_cfg: SwinConfig, bf_cfg: Optional[BatchFormerConfig], rng: np.random.Generator):
        self.backbone = SwinTransformer(swin_cfg, rng)
        self.batchformer = BatchFormer(bf_cfg, rng) if bf_cfg is not None and bf_cfg.enabled else None

    @property
    def num_classes(self) -> int:
        return self.backbone.cfg.num_classes

    def forward(self, images, rng=None) -> tuple[Tensor, Optional[Tensor]]:
        """(plain logits, BatchFormer-stream logits); the second is None outside training."""
        feats = self.backbone.forward_features(images, rng)
        return dual_stream_logits(feats, self.backbone.head, self.batchformer, self.training)

    def predict(self, images) -> np.ndarray:
        was = self.training
        self.eval()
        try:
            with T.no_grad():
                return self.backbone(images).data
        finally:
            self.train(was)

    def inference_state(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.state_dict().items() if not k.startswith(BATCHFORMER_PREFIX)}
