"""Classification transform stack: flip, normalize, cutout, tensor layout.

Images enter as raw (H, W, C) uint8 records and leave as float32 (C, H, W)
arrays.  Conversion happens first so the whole stack operates on floats;
the random steps (flip decision, cutout center) are driven by a per-sample
seed, so the augmented output is a pure function of (record, config, seed)
no matter which worker computes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ImageRecord
from .prng import SplitMix64, derive_seed

# a transformed image: float32 array in (C, H, W) layout
TensorImage = np.ndarray


@dataclass(frozen=True)
class TransformConfig:
    """Stack parameters; cutout_side=None means floor(min(H, W) / 4)."""

    flip_probability: float = 0.5
    mean: float | tuple[float, ...] = 0.5
    std: float | tuple[float, ...] = 0.5
    cutout_side: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must be in [0, 1]")
        if self.cutout_side is not None and self.cutout_side < 0:
            raise ValueError("cutout_side must be >= 0")
        if np.any(np.asarray(self.std, dtype=np.float64) <= 0):
            raise ValueError("std must be strictly positive")

    def resolved_cutout_side(self, height: int, width: int) -> int:
        side = (min(height, width) // 4 if self.cutout_side is None
                else self.cutout_side)
        if side > min(height, width):
            raise ValueError(
                f"cutout side {side} exceeds image min dimension {min(height, width)}")
        return side


def to_tensor(record: ImageRecord) -> TensorImage:
    """(H, W, C) uint8 bytes -> (C, H, W) float32 scaled into [0, 1]."""
    arr = record.to_array()
    return np.ascontiguousarray(arr.transpose(2, 0, 1)).astype(np.float32) / 255.0


def horizontal_flip(img: TensorImage, flipped: bool) -> TensorImage:
    """Mirror columns (x -> W-1-x) when ``flipped``; identity otherwise."""
    if not flipped:
        return img.copy()
    return np.ascontiguousarray(img[:, :, ::-1])


def normalize(img: TensorImage, mean, std) -> TensorImage:
    """Per-channel (x - mean) / std."""
    mean = np.asarray(mean, dtype=np.float32).reshape(-1, 1, 1)
    std = np.asarray(std, dtype=np.float32).reshape(-1, 1, 1)
    if np.any(std <= 0):
        raise ValueError("std must be strictly positive")
    return (img - mean) / std


def cutout(img: TensorImage, side: int, center: tuple[int, int]) -> TensorImage:
    """Zero a side x side square centered at (row, col), clipped to bounds."""
    if side == 0:
        return img.copy()
    _, height, width = img.shape
    cy, cx = center
    y0 = max(cy - side // 2, 0)
    x0 = max(cx - side // 2, 0)
    y1 = min(cy - side // 2 + side, height)
    x1 = min(cx - side // 2 + side, width)
    out = img.copy()
    out[:, y0:y1, x0:x1] = 0.0
    return out


def sample_seed(transform_seed: int, epoch: int, sample_id: int) -> int:
    """Per-sample augmentation seed; worker count can never change it."""
    return derive_seed(transform_seed, "sample", epoch, sample_id)


def apply_stack(record: ImageRecord, config: TransformConfig,
                seed: int) -> TensorImage:
    """to_tensor -> flip -> normalize -> cutout, decisions drawn from ``seed``.

    Draw order is fixed: one uniform for the flip decision, then the cutout
    center row and column (only when the cutout square is non-empty).
    """
    rng = SplitMix64(seed)
    img = to_tensor(record)
    img = horizontal_flip(img, rng.next_float() < config.flip_probability)
    img = normalize(img, config.mean, config.std)
    side = config.resolved_cutout_side(record.height, record.width)
    if side > 0:
        cy = rng.next_below(record.height)
        cx = rng.next_below(record.width)
        img = cutout(img, side, (cy, cx))
    return img
