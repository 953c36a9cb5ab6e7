"""Image decoding: binary PPM natively, other formats through Pillow if installed."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

EXTENSIONS = (".ppm", ".png", ".jpg", ".jpeg")

_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def read_ppm(path) -> np.ndarray:
    """Binary P6 file -> uint8 array (H, W, 3)."""
    raw = Path(path).read_bytes()
    m = _HEADER.match(raw)
    if not m:
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[m.end():m.end() + w * h * 3]
    if len(body) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    """Write (H, W, 3) uint8, or float in [0, 1] (rounded), as binary P6."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError(f"{path}: decoding {path.suffix} needs Pillow; PPM is always available") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def resolve_image(root, name: str) -> Path:
    """Locate ``name`` under ``root``, trying the known extensions when none is given."""
    root = Path(root)
    direct = root / name
    if direct.suffix.lower() in EXTENSIONS and direct.is_file():
        return direct
    for ext in EXTENSIONS:
        cand = root / f"{name}{ext}"
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"no image file for {name!r} under {root}")


def to_float(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0
