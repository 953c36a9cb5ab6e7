"""Hierarchical shifted-window transformer backbone."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Mlp, Module, parameter
from .tensor import ShapeError, Tensor

MASK_VALUE = -1e9


@dataclass
class SwinConfig:
    image_size: int = 64
    patch_size: int = 4
    in_chans: int = 3
    embed_dim: int = 16
    depths: tuple = (2, 2, 2, 2)
    num_heads: tuple = (2, 2, 4, 4)
    window_size: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 8
    drop_rate: float = 0.0

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.num_heads = tuple(int(h) for h in self.num_heads)
        self.validate()

    def validate(self) -> None:
        if len(self.depths) != 4 or len(self.num_heads) != 4:
            raise ValueError("depths and num_heads need exactly 4 entries (four stages)")
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        grid = self.image_size // self.patch_size
        if grid % 8:
            raise ValueError(f"token grid {grid} must be divisible by 8 for three 2x merges")
        for s in range(4):
            if self.stage_dim(s) % self.num_heads[s]:
                raise ValueError(f"stage {s} width {self.stage_dim(s)} not divisible by {self.num_heads[s]} heads")
            side = self.stage_grid(s)
            if side % min(self.window_size, side):
                raise ValueError(f"stage {s} grid {side} not divisible by window {self.window_size}")
        if self.num_classes < 1 or self.window_size < 1 or not 0 <= self.drop_rate < 1:
            raise ValueError("invalid num_classes / window_size / drop_rate")

    def stage_dim(self, s: int) -> int:
        return self.embed_dim * 2**s

    def stage_grid(self, s: int) -> int:
        return (self.image_size // self.patch_size) // 2**s

    @property
    def num_features(self) -> int:
        return self.stage_dim(3)


# -- window helpers ------------------------------------------------------------
def window_partition(x: Tensor, M: int) -> Tensor:
    """(B, h, w, C) -> (B * nW, M, M, C), windows in row-major order."""
    B, h, w, C = x.shape
    if h % M or w % M:
        raise ShapeError(f"feature map {h}x{w} not divisible by window {M}")
    x = T.reshape(x, (B, h // M, M, w // M, M, C))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (B * (h // M) * (w // M), M, M, C))


def window_reverse(windows: Tensor, M: int, h: int, w: int) -> Tensor:
    C = windows.shape[-1]
    x = T.reshape(windows, (-1, h // M, w // M, M, M, C))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (-1, h, w, C))


def cyclic_shift(x: Tensor, s: int, M: Optional[int] = None) -> Tensor:
    """Roll the spatial axes of (B, h, w, C) by (-s, -s)."""
    if s < 0 or (M is not None and s >= M):
        raise ValueError(f"shift {s} outside [0, {M})")
    return x if s == 0 else T.roll(x, (-s, -s), (1, 2))


def cyclic_unshift(x: Tensor, s: int) -> Tensor:
    return x if s == 0 else T.roll(x, (s, s), (1, 2))


def shift_region_ids(h: int, w: int, M: int, s: int) -> np.ndarray:
    """Label each token of the shifted map by its 3x3 band region."""
    ids = np.zeros((h, w), dtype=np.int64)
    bands_h = (slice(0, h - M), slice(h - M, h - s), slice(h - s, h))
    bands_w = (slice(0, w - M), slice(w - M, w - s), slice(w - s, w))
    cnt = 0
    for bh in bands_h:
        for bw in bands_w:
            ids[bh, bw] = cnt
            cnt += 1
    return ids


def build_shift_mask(h: int, w: int, M: int, s: int) -> np.ndarray:
    """Additive attention bias (nW, M*M, M*M): 0 within a region, MASK_VALUE across regions."""
    if h % M or w % M:
        raise ShapeError(f"feature map {h}x{w} not divisible by window {M}")
    if not 0 <= s < M:
        raise ValueError(f"shift {s} outside [0, {M})")
    nW = (h // M) * (w // M)
    if s == 0:
        return np.zeros((nW, M * M, M * M))
    ids = shift_region_ids(h, w, M, s)
    win = ids.reshape(h // M, M, w // M, M).transpose(0, 2, 1, 3).reshape(nW, M * M)
    differ = win[:, None, :] != win[:, :, None]
    return np.where(differ, MASK_VALUE, 0.0)


def relative_position_index(M: int) -> np.ndarray:
    """(M*M, M*M) map from token pairs to rows of a (2M-1)^2 bias table."""
    coords = np.stack(np.meshgrid(np.arange(M), np.arange(M), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel = rel.transpose(1, 2, 0) + (M - 1)
    return rel[..., 0] * (2 * M - 1) + rel[..., 1]


# -- attention -----------------------------------------------------------------
class Attention(Module):
    """Multi-head self-attention over (S, N, C) token groups.

    With ``window`` set, a learnable relative position bias table is added to
    the logits; ``mask`` is an optional constant (nW, N, N) additive bias
    applied to groups laid out as (B * nW, N, C).
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, window: Optional[int] = None,
                 zero_init_proj: bool = True):
        if dim % heads:
            raise ShapeError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng, zero_init=zero_init_proj)
        self.window = window
        if window is not None:
            self.rel_pos_table = parameter(np.zeros(((2 * window - 1) ** 2, heads)))
            self.rel_pos_index = relative_position_index(window)
        self.last_attn: Optional[np.ndarray] = None

    def rel_bias(self) -> Tensor:
        N = self.window * self.window
        b = T.gather_rows(self.rel_pos_table, self.rel_pos_index.reshape(-1))
        return T.transpose(T.reshape(b, (N, N, self.heads)), (2, 0, 1))

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        S, N, C = x.shape
        if C != self.dim:
            raise ShapeError(f"attention expects {self.dim} channels, got {C}")
        h, d = self.heads, C // self.heads
        qkv = T.reshape(self.qkv(x), (S, N, 3, h, d))
        qkv = T.transpose(qkv, (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        logits = T.matmul(T.mul(q, self.scale), T.transpose(k, (0, 1, 3, 2)))
        if self.window is not None:
            logits = T.add(logits, self.rel_bias())
        if mask is not None:
            nW = mask.shape[0]
            full = np.broadcast_to(mask[:, None], (nW, h, N, N))
            logits = T.reshape(T.add(T.reshape(logits, (S // nW, nW, h, N, N)), full), (S, h, N, N))
        attn = T.softmax(logits, axis=-1)
        self.last_attn = attn.data
        out = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (S, N, C))
        return self.proj(out)


def window_attention(x: Tensor, attn: Attention, mask: Optional[np.ndarray] = None) -> Tensor:
    return attn(x, mask)


# -- blocks --------------------------------------------------------------------
class SwinBlock(Module):
    """Pre-norm residual block: W-MSA (or SW-MSA when shifted) then MLP."""

    def __init__(self, dim: int, heads: int, grid: int, window: int, shifted: bool,
                 mlp_ratio: float, rng: np.random.Generator, drop: float = 0.0):
        if grid < window:
            window, shifted = grid, False
        self.dim, self.grid, self.window = dim, grid, window
        self.shift = window // 2 if shifted else 0
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng, window=window)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, drop=drop)
        self.attn_mask = build_shift_mask(grid, grid, window, self.shift) if self.shift else None

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        B, h, w, C = x.shape
        if (h, w, C) != (self.grid, self.grid, self.dim):
            raise ShapeError(f"block expects ({self.grid},{self.grid},{self.dim}), got {x.shape[1:]}")
        M = self.window
        y = cyclic_shift(self.norm1(x), self.shift)
        win = T.reshape(window_partition(y, M), (-1, M * M, C))
        win = self.attn(win, self.attn_mask)
        y = window_reverse(T.reshape(win, (-1, M, M, C)), M, h, w)
        x = T.add(x, cyclic_unshift(y, self.shift))
        return T.add(x, self.mlp(self.norm2(x), rng))


class PatchMerging(Module):
    """2x2 neighbourhood concat to 4C, LayerNorm, linear projection to 2C."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False)

    @staticmethod
    def concat(x: Tensor) -> Tensor:
        B, h, w, C = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"patch merging needs even extents, got {h}x{w}")
        parts = [x[:, 0::2, 0::2, :], x[:, 1::2, 0::2, :], x[:, 0::2, 1::2, :], x[:, 1::2, 1::2, :]]
        return T.concat(parts, axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        return self.reduction(self.norm(self.concat(x)))


def patch_merge(x: Tensor, merger: PatchMerging) -> Tensor:
    return merger(x)


class PatchEmbed(Module):
    def __init__(self, cfg: SwinConfig, rng: np.random.Generator):
        self.patch, self.image_size = cfg.patch_size, cfg.image_size
        self.in_chans = cfg.in_chans
        self.proj = Linear(cfg.patch_size**2 * cfg.in_chans, cfg.embed_dim, rng)
        self.norm = LayerNorm(cfg.embed_dim)

    def patchify(self, image: Tensor) -> Tensor:
        B, H, W, Cin = image.shape
        p = self.patch
        if H != self.image_size or W != self.image_size or Cin != self.in_chans:
            raise ShapeError(
                f"expected images ({self.image_size},{self.image_size},{self.in_chans}), got {image.shape[1:]}"
            )
        x = T.reshape(image, (B, H // p, p, W // p, p, Cin))
        x = T.transpose(x, (0, 1, 3, 2, 4, 5))
        return T.reshape(x, (B, H // p, W // p, p * p * Cin))

    def forward(self, image: Tensor) -> Tensor:
        return self.norm(self.proj(self.patchify(image)))


def patch_embed(image: Tensor, embed: PatchEmbed) -> Tensor:
    return embed(image)


class Stage(Module):
    def __init__(self, cfg: SwinConfig, s: int, rng: np.random.Generator):
        dim, grid = cfg.stage_dim(s), cfg.stage_grid(s)
        self.blocks = [
            SwinBlock(dim, cfg.num_heads[s], grid, cfg.window_size, shifted=i % 2 == 1,
                      mlp_ratio=cfg.mlp_ratio, rng=rng, drop=cfg.drop_rate)
            for i in range(cfg.depths[s])
        ]
        self.downsample = PatchMerging(dim, rng) if s < 3 else None

    def forward(self, x: Tensor, rng=None) -> Tensor:
        for blk in self.blocks:
            x = blk(x, rng)
        return x if self.downsample is None else self.downsample(x)


class SwinTransformer(Module):
    """Patch embedding, four stages, pooled LayerNorm features, linear head."""

    def __init__(self, cfg: SwinConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg, rng)
        self.stages = [Stage(cfg, s, rng) for s in range(4)]
        self.norm = LayerNorm(cfg.num_features)
        self.head = Linear(cfg.num_features, cfg.num_classes, rng)

    def stage_outputs(self, image: Tensor) -> list[Tensor]:
        """Token maps entering each stage (before its blocks)."""
        outs = []
        x = self.patch_embed(image)
        for stage in self.stages:
            outs.append(x)
            x = stage(x)
        return outs

    def forward_features(self, image: Tensor, rng=None) -> Tensor:
        x = self.patch_embed(as_image(image))
        for i, stage in enumerate(self.stages):
            x = stage(x, rng)
            if not np.isfinite(x.data).all():
                raise FloatingPointError(f"non-finite activations after stage {i}")
        B, h, w, C = x.shape
        x = T.mean(T.reshape(x, (B, h * w, C)), axis=1)
        return self.norm(x)

    def forward(self, image: Tensor, rng=None) -> Tensor:
        return self.head(self.forward_features(image, rng))


def as_image(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
