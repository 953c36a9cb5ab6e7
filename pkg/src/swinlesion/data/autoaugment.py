"""Fixed library of named transforms applied by an explicit (name, magnitude, probability) policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elastic import bilinear_sample

# declared magnitude range per transform
RANGES: dict[str, tuple[float, float]] = {
    "rotate": (-30.0, 30.0),          # degrees
    "shear_x": (-0.3, 0.3),
    "shear_y": (-0.3, 0.3),
    "translate": (-0.3, 0.3),         # fraction of the image side, both axes
    "brightness": (-0.9, 0.9),
    "contrast": (-0.9, 0.9),
    "color_jitter": (0.0, 0.5),       # per-channel gain drawn from [1 - m, 1 + m]
    "flip_horizontal": (0.0, 1.0),    # magnitude unused
}


def _canonical(name: str) -> str:
    return name.replace("-", "_")


@dataclass
class AugOp:
    name: str
    magnitude: float
    probability: float


@dataclass
class AugPolicy:
    ops: list[AugOp]

    def __post_init__(self):
        for op in self.ops:
            op.name = _canonical(op.name)
            if op.name not in RANGES:
                raise ValueError(f"unknown transform {op.name!r}; known: {sorted(RANGES)}")
            lo, hi = RANGES[op.name]
            if not lo <= op.magnitude <= hi:
                raise ValueError(f"{op.name} magnitude {op.magnitude} outside [{lo}, {hi}]")
            if not 0.0 <= op.probability <= 1.0:
                raise ValueError(f"{op.name} probability {op.probability} outside [0, 1]")

    @classmethod
    def from_list(cls, items) -> "AugPolicy":
        return cls([AugOp(str(n), float(m), float(p)) for n, m, p in items])

    def to_list(self) -> list[list]:
        return [[op.name, op.magnitude, op.probability] for op in self.ops]


def _affine(image: np.ndarray, matrix: np.ndarray, offset=(0.0, 0.0)) -> np.ndarray:
    """Resample with out(p) = image(c + A (p - c) + offset), p = (y, x), c = image centre."""
    H, W = image.shape[:2]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    ry, rx = yy - cy, xx - cx
    ys = cy + matrix[0, 0] * ry + matrix[0, 1] * rx + offset[0]
    xs = cx + matrix[1, 0] * ry + matrix[1, 1] * rx + offset[1]
    return bilinear_sample(image, ys, xs)


def rotate(image, m, rng):
    t = math.radians(m)
    c, s = math.cos(t), math.sin(t)
    return _affine(image, np.array([[c, -s], [s, c]]))


def shear_x(image, m, rng):
    return _affine(image, np.array([[1.0, 0.0], [m, 1.0]]))


def shear_y(image, m, rng):
    return _affine(image, np.array([[1.0, m], [0.0, 1.0]]))


def translate(image, m, rng):
    H, W = image.shape[:2]
    return _affine(image, np.eye(2), offset=(m * H, m * W))


def brightness(image, m, rng):
    return np.clip(image * (1.0 + m), 0.0, 1.0)


def contrast(image, m, rng):
    mu = image.mean()
    return np.clip(mu + (image - mu) * (1.0 + m), 0.0, 1.0)


def color_jitter(image, m, rng):
    gains = rng.uniform(1.0 - m, 1.0 + m, size=image.shape[-1])
    return np.clip(image * gains, 0.0, 1.0)


def flip_horizontal(image, m, rng):
    return np.ascontiguousarray(image[:, ::-1])


TRANSFORMS: dict[str, Callable] = {
    "rotate": rotate,
    "shear_x": shear_x,
    "shear_y": shear_y,
    "translate": translate,
    "brightness": brightness,
    "contrast": contrast,
    "color_jitter": color_jitter,
    "flip_horizontal": flip_horizontal,
}


def apply_policy(image: np.ndarray, policy: AugPolicy, seed) -> np.ndarray:
    """Apply each op in order with its probability; one generator drives every draw."""
    rng = np.random.default_rng(seed)
    out = np.asarray(image, dtype=np.float64)
    for op in policy.ops:
        if rng.random() < op.probability:
            out = TRANSFORMS[op.name](out, op.magnitude, rng)
    return out
