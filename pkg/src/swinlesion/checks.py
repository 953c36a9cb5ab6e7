"""Model-level gradient verification used by the ``gradcheck`` command and the test suite."""

from __future__ import annotations

import numpy as np

from .batchformer import dual_stream_loss
from .config import ExperimentConfig
from .engine import build_model, make_loss, normalize
from .gradcheck import CheckReport, check_tensors
from .tensor import Tensor


def randomize_parameters(model, seed: int, scale: float = 0.2) -> None:
    """Move every parameter off its initial value so zero-initialized branches carry gradient."""
    rng = np.random.default_rng(seed)
    for _, p in model.named_parameters():
        p.data = p.data + rng.normal(0.0, scale, size=p.shape)


def model_gradcheck(cfg: ExperimentConfig, batch: int = 3, seed: int = 0, max_coords: int = 4,
                    h: float = 1e-5, tol: float = 1e-3) -> list[CheckReport]:
    """Check every parameter tensor of the configured model + loss (training mode, both streams)."""
    rng = np.random.default_rng(seed)
    K = cfg.model.num_classes
    images = rng.uniform(0.0, 1.0, size=(batch, cfg.model.image_size, cfg.model.image_size, cfg.model.in_chans))
    labels = rng.integers(0, K, size=batch)
    model = build_model(cfg).train()
    randomize_parameters(model, seed + 1)
    loss_fn = make_loss(cfg, np.bincount(labels, minlength=K) + 1)
    x = Tensor(normalize(images))

    def objective():
        plain, bf_logits = model(x)
        return dual_stream_loss(loss_fn, plain, bf_logits, labels)

    return check_tensors(objective, model.named_parameters(), h=h, tol=tol, max_coords=max_coords, seed=seed)
