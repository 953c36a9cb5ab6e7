"""Procedural lesion-like images for fixtures, overfit checks and the imbalance harness."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ISIC2019_CLASSES, LabeledDataset, write_ground_truth
from .imageio import write_ppm

_PALETTE = np.array([
    [0.85, 0.25, 0.20],
    [0.25, 0.70, 0.30],
    [0.20, 0.35, 0.85],
    [0.85, 0.75, 0.20],
    [0.70, 0.25, 0.75],
    [0.20, 0.75, 0.80],
    [0.55, 0.40, 0.25],
    [0.90, 0.55, 0.65],
])


def class_images(counts: Sequence[int], size: int = 64, seed: int = 0, noise: float = 0.05,
                 separation: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Textured blobs: class k gets palette colour k and stripe orientation k*pi/8.

    ``separation`` in (0, 1] pulls class colours toward their common mean,
    making classes overlap more as it shrinks.
    """
    rng = np.random.default_rng(seed)
    K = len(counts)
    palette = _PALETTE[np.arange(K) % len(_PALETTE)]
    palette = palette.mean(axis=0) + separation * (palette - palette.mean(axis=0))
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images, labels = [], []
    for k, n in enumerate(counts):
        theta = k * np.pi / max(K, 1)
        for _ in range(int(n)):
            cy, cx = rng.uniform(0.35, 0.65, size=2) * size
            radius = rng.uniform(0.22, 0.32) * size
            blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius**2)))
            phase = rng.uniform(0, 2 * np.pi)
            stripes = 0.5 + 0.5 * np.sin(2 * np.pi * 4 * (xx * np.cos(theta) + yy * np.sin(theta)) / size + phase)
            lesion = palette[k] * (0.7 + 0.3 * stripes)[..., None]
            skin = np.array([0.93, 0.80, 0.70]) * rng.uniform(0.9, 1.0)
            img = skin + blob[..., None] * (lesion - skin)
            img = img + rng.normal(0.0, noise, size=img.shape)
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(k)
    return np.stack(images), np.array(labels, dtype=np.int64)


def two_blob_images(n_per_class: int, size: int = 32, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Red blob (class 0) versus blue blob (class 1); separable by mean channel values."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    colours = np.array([[0.9, 0.2, 0.2], [0.2, 0.2, 0.9]])
    images, labels = [], []
    for k in range(2):
        for _ in range(n_per_class):
            cy, cx = rng.uniform(0.3, 0.7, size=2) * size
            blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (0.2 * size) ** 2)))
            img = 0.5 + blob[..., None] * (colours[k] - 0.5) + rng.normal(0, 0.03, size=(size, size, 3))
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(k)
    return np.stack(images), np.array(labels, dtype=np.int64)


def long_tail_counts(num_classes: int, head: int, ratio: float) -> list[int]:
    """Geometric decay from ``head`` down to ``head / ratio``."""
    if num_classes == 1:
        return [head]
    return [int(round(head * ratio ** (-k / (num_classes - 1)))) for k in range(num_classes)]


def write_fixture(root, counts: Sequence[int], size: int = 64, seed: int = 0,
                  class_names: Sequence[str] = ISIC2019_CLASSES, **kwargs) -> LabeledDataset:
    """Render images as PPM under ``root`` plus ``ground_truth.csv``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    class_names = tuple(class_names)[: len(counts)]
    images, labels = class_images(counts, size=size, seed=seed, **kwargs)
    records = []
    for i, (img, k) in enumerate(zip(images, labels)):
        name = f"SYN_{i:07d}"
        write_ppm(root / f"{name}.ppm", img)
        records.append((name, int(k)))
    write_ground_truth(root / "ground_truth.csv", records, class_names)
    return LabeledDataset(records, class_names, root)
