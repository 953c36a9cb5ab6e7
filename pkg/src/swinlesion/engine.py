"""Training loop, evaluation, and checkpoint assembly."""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import tensor as T
from .batchformer import dual_stream_loss
from .checkpoint import Checkpoint
from .config import ExperimentConfig, from_dict
from .data.augment import materialize, selective_augment
from .data.autoaugment import AugPolicy, apply_policy
from .losses import FocalLossParams, alpha_from_distribution, cross_entropy, focal_loss
from .metrics import EpochRecord, MetricsReport, SplitMetrics
from .model import BATCHFORMER_PREFIX, LesionClassifier
from .optim import AdamWState, optimizer_step
from .scheduler import SchedulerState, scheduler_step
from .tensor import Tensor

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class ImageSet:
    images: np.ndarray          # (N, H, W, 3) float64 in [0, 1]
    labels: np.ndarray          # (N,) int
    names: Optional[list[str]] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "ImageSet":
        idx = np.asarray(idx, dtype=np.int64)
        names = [self.names[i] for i in idx] if self.names is not None else None
        return ImageSet(self.images[idx], self.labels[idx], names)


@dataclass
class TrainData:
    train: ImageSet
    val: ImageSet
    test: Optional[ImageSet] = None
    class_names: Sequence[str] = ()
    extra_train: Optional[ImageSet] = None   # pre-rendered augmentation (e.g. from a manifest)


def normalize(images: np.ndarray) -> np.ndarray:
    return (images - 0.5) * 2.0


def build_model(cfg: ExperimentConfig, with_batchformer: bool = True) -> LesionClassifier:
    rng = np.random.default_rng(cfg.seed_for("init"))
    return LesionClassifier(cfg.model, cfg.batchformer if with_batchformer else None, rng)


def make_loss(cfg: ExperimentConfig, train_counts: Sequence[int]) -> Callable:
    K = cfg.model.num_classes
    if cfg.loss.kind == "ce":
        return cross_entropy
    if isinstance(cfg.loss.alpha, str):
        counts = np.maximum(np.asarray(train_counts), 1)
        alpha = alpha_from_distribution(counts, cfg.loss.alpha)
    else:
        alpha = np.asarray(cfg.loss.alpha, dtype=np.float64)
        if alpha.shape != (K,):
            raise ValueError(f"loss.alpha lists {alpha.size} weights for {K} classes")
    params = FocalLossParams(alpha=alpha, gamma=cfg.loss.gamma)
    return lambda logits, labels: focal_loss(logits, labels, params)


def predict_logits(model: LesionClassifier, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode plain-stream logits; every sample is computed independently of its batch."""
    was = model.training
    model.eval()
    try:
        out = []
        with T.no_grad():
            for start in range(0, len(images), batch_size):
                out.append(model.backbone(Tensor(normalize(images[start:start + batch_size]))).data)
        return np.concatenate(out) if out else np.zeros((0, model.num_classes))
    finally:
        model.train(was)


def split_metrics(model, data: ImageSet, batch_size: int, loss_fn=None) -> SplitMetrics:
    logits = predict_logits(model, data.images, batch_size)
    loss = None
    if loss_fn is not None and len(data):
        with T.no_grad():
            loss = loss_fn(Tensor(logits), data.labels).item()
    return SplitMetrics.from_logits(logits, data.labels, model.num_classes, loss)


# -- batching --------------------------------------------------------------------
def _batch_indices(n: int, batch_size: int, order: np.ndarray, drop_last: bool) -> list[np.ndarray]:
    batches = [order[s:s + batch_size] for s in range(0, n, batch_size)]
    if drop_last and len(batches) > 1 and len(batches[-1]) < batch_size:
        batches.pop()
    return batches


def _prefetch(gen: Iterator, depth: int) -> Iterator:
    """Run ``gen`` on a worker thread, handing items over through a bounded queue."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = object()

    def work():
        try:
            for item in gen:
                q.put(item)
        except BaseException as exc:  # surfaced on the consumer side
            q.put(exc)
        q.put(done)

    threading.Thread(target=work, daemon=True).start()
    while True:
        item = q.get()
        if item is done:
            return
        if isinstance(item, BaseException):
            raise item
        yield item


def _epoch_batches(cfg: ExperimentConfig, images, labels, epoch: int, policy: Optional[AugPolicy]):
    order = np.random.default_rng([cfg.seed_for("shuffle"), epoch]).permutation(len(labels))
    aug_seed = cfg.seed_for("augment")
    for idx in _batch_indices(len(labels), cfg.train.batch_size, order, cfg.batchformer.enabled):
        x = images[idx]
        if policy is not None:
            x = np.stack([apply_policy(img, policy, [aug_seed, epoch, int(i)]) for img, i in zip(x, idx)])
        yield normalize(x), labels[idx]


# -- checkpoint helpers ------------------------------------------------------------
def _config_key(d: dict) -> dict:
    d = {k: dict(v) if isinstance(v, dict) else v for k, v in d.items()}
    d["train"].pop("epochs", None)
    d["train"].pop("loader_threads", None)
    d["paths"] = {}
    return d


def make_checkpoint(model, cfg, epoch, sched, lr, opt: AdamWState, history, class_names) -> Checkpoint:
    tensors = {f"model.{k}": v for k, v in model.state_dict().items()}
    for name, arr in opt.m.items():
        tensors[f"optim.m.{name}"] = arr.copy()
        tensors[f"optim.v.{name}"] = opt.v[name].copy()
    meta = {
        "config": cfg.to_dict(),
        "epoch": epoch,
        "lr": lr,
        "scheduler": sched.to_dict() if sched is not None else None,
        "optim_step": opt.step,
        "rng": {"root_seed": cfg.seed, "derivation": "sha256(root/purpose)[:8] + epoch word",
                "next_epoch": epoch},
        "history": [h.__dict__ for h in history],
        "class_names": list(class_names),
    }
    return Checkpoint(tensors, meta)


# -- training --------------------------------------------------------------------
def train(data: TrainData, cfg: ExperimentConfig, resume: Optional[Checkpoint] = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> tuple[Checkpoint, MetricsReport]:
    K = cfg.model.num_classes
    class_names = list(data.class_names) or [str(k) for k in range(K)]
    for name, part in (("train", data.train), ("val", data.val), ("test", data.test)):
        if part is not None and len(part) and part.labels.max() >= K:
            raise ValueError(f"{name} labels exceed the model's {K} classes")
    if len(data.train) < 1 or len(data.val) < 1:
        raise ValueError("training and validation sets must be nonempty")

    images, labels = data.train.images, data.train.labels
    if data.extra_train is not None and len(data.extra_train):
        images = np.concatenate([images, data.extra_train.images])
        labels = np.concatenate([labels, data.extra_train.labels])
    elif cfg.augment.elastic:
        entries = selective_augment(labels, range(len(labels)), cfg.augment.threshold, cfg.augment.multiplier,
                                    cfg.seed_for("augment"), cfg.augment.sigma, cfg.augment.alpha)
        if entries:
            extra = materialize(entries, lambda i: data.train.images[i])
            images = np.concatenate([images, extra])
            labels = np.concatenate([labels, [e.label for e in entries]])
    policy = AugPolicy.from_list(cfg.augment.policy) if cfg.augment.policy else None

    model = build_model(cfg)
    params = dict(model.named_parameters())
    loss_fn = make_loss(cfg, np.bincount(labels, minlength=K))
    opt = AdamWState()
    sched = None
    if cfg.sched.kind == "plateau":
        sched = SchedulerState(lr=cfg.optim.lr, patience=cfg.sched.patience, factor=cfg.sched.factor,
                               min_lr=cfg.sched.min_lr, threshold=cfg.sched.threshold)
    lr = cfg.optim.lr
    history: list[EpochRecord] = []
    start = 0
    if resume is not None:
        if _config_key(resume.config) != _config_key(cfg.to_dict()):
            raise ValueError("checkpoint was produced by a different configuration")
        model.load_state_dict(resume.model_state())
        opt = AdamWState(int(resume.meta["optim_step"]), resume.group("optim.m."), resume.group("optim.v."))
        if resume.meta.get("scheduler") is not None:
            sched = SchedulerState.from_dict(resume.meta["scheduler"])
        lr = float(resume.meta["lr"])
        history = [EpochRecord(**h) for h in resume.meta.get("history", [])]
        start = resume.epoch

    model.train()
    for epoch in range(start, cfg.train.epochs):
        batches = _epoch_batches(cfg, images, labels, epoch, policy)
        if cfg.train.loader_threads > 0:
            batches = _prefetch(batches, depth=2 * cfg.train.loader_threads)
        total, seen = 0.0, 0
        for b, (x, y) in enumerate(batches):
            model.zero_grad()
            drop_rng = np.random.default_rng([cfg.seed_for("dropout"), epoch, b])
            plain, bf_logits = model(Tensor(x), drop_rng)
            loss = dual_stream_loss(loss_fn, plain, bf_logits, y)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            loss.backward()
            optimizer_step(params, opt, lr, cfg.optim.weight_decay, cfg.optim.beta1, cfg.optim.beta2,
                           cfg.optim.eps)
            total += value * len(y)
            seen += len(y)
        val = split_metrics(model, data.val, cfg.train.eval_batch_size, loss_fn)
        record = EpochRecord(epoch, total / max(seen, 1), val.loss, val.accuracy, lr)
        history.append(record)
        log.info(record.line())
        if on_epoch is not None:
            on_epoch(record)
        if sched is not None:
            sched = scheduler_step(sched, val.loss)
            lr = sched.lr
        model.train()

    ckpt = make_checkpoint(model, cfg, cfg.train.epochs, sched, lr, opt, history, class_names)
    report = MetricsReport(class_names, history=history, config=cfg.to_dict())
    bs = cfg.train.eval_batch_size
    report.splits["train"] = split_metrics(model, data.train, bs, loss_fn)
    report.splits["val"] = split_metrics(model, data.val, bs, loss_fn)
    if data.test is not None and len(data.test):
        report.splits["test"] = split_metrics(model, data.test, bs, loss_fn)
    return ckpt, report


def load_inference_model(ckpt: Checkpoint) -> LesionClassifier:
    cfg = from_dict(ckpt.config)
    model = build_model(cfg, with_batchformer=False)
    state = {k: v for k, v in ckpt.model_state().items() if not k.startswith(BATCHFORMER_PREFIX)}
    model.load_state_dict(state)
    return model.eval()


def evaluate(ckpt: Checkpoint, data: ImageSet, batch_size: int = 32, split: str = "eval",
             class_names: Optional[Sequence[str]] = None) -> MetricsReport:
    model = load_inference_model(ckpt)
    K = model.num_classes
    if class_names is not None and len(class_names) != K:
        raise ValueError(f"checkpoint predicts {K} classes but the manifest defines {len(class_names)}")
    if len(data) and data.labels.max() >= K:
        raise ValueError(f"labels exceed the checkpoint's {K} classes")
    names = list(class_names) if class_names is not None else ckpt.meta.get("class_names") or [str(k) for k in range(K)]
    report = MetricsReport(names, config=ckpt.config)
    report.splits[split] = split_metrics(model, data, batch_size)
    return report
