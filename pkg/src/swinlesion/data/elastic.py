"""Elastic deformation from Gaussian-smoothed random displacement fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter


@dataclass
class DeformationField:
    dx: np.ndarray
    dy: np.ndarray
    sigma: float
    alpha: float
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape


def sample_deformation(shape, sigma: float = 8.0, alpha: float = 12.0, seed: int = 0) -> DeformationField:
    """Uniform(-1, 1) noise per pixel, smoothed by a normalized Gaussian (cut at 3 sigma), times alpha.

    The smoothing kernel sums to one, so every displacement is bounded by ``alpha``.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    h, w = int(shape[0]), int(shape[1])
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, size=(2, h, w))
    if alpha == 0:
        return DeformationField(np.zeros((h, w)), np.zeros((h, w)), sigma, alpha, seed)
    dx = gaussian_filter(noise[0], sigma, mode="reflect", truncate=3.0) * alpha
    dy = gaussian_filter(noise[1], sigma, mode="reflect", truncate=3.0) * alpha
    return DeformationField(dx, dy, sigma, alpha, seed)


def bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) ``image`` at real coordinates, clamping to the border.

    Integer coordinates reproduce the source pixels exactly.
    """
    H, W = image.shape[:2]
    ys = np.clip(ys, 0.0, H - 1)
    xs = np.clip(xs, 0.0, W - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]
    a, b = image[y0, x0], image[y0, x1]
    c, d = image[y1, x0], image[y1, x1]
    top = a + wx * (b - a)
    bottom = c + wx * (d - c)
    return top + wy * (bottom - top)


def elastic_deform(image: np.ndarray, field: DeformationField) -> np.ndarray:
    """Backward warp: out[y, x] = image[y + dy, x + dx]."""
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    if image.shape[:2] != field.shape:
        raise ValueError(f"field shape {field.shape} does not match image {image.shape[:2]}")
    H, W = field.shape
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    out = bilinear_sample(image, yy + field.dy, xx + field.dx)
    return out[..., 0] if squeeze else out


def resize(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of (H, W, C) to (size, size, C) with pixel-center alignment."""
    H, W = image.shape[:2]
    if (H, W) == (size, size):
        return np.asarray(image, dtype=np.float64)
    ys = (np.arange(size) + 0.5) * (H / size) - 0.5
    xs = (np.arange(size) + 0.5) * (W / size) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(np.asarray(image, dtype=np.float64), yy, xx)
