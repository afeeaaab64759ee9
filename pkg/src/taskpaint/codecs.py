"""Render structured task labels as RGB images and read them back.

Every task output lives in the same 8-bit RGB space as the input image:

* segmentation  -> binary mask as a black/white image
* depth         -> meters in [0, 10] mapped linearly onto [0, 255] gray
* classification-> a pure color block (one of two instructed colors)
* detection     -> the input image with red box outlines (see boxes.py for
                   the decoding pipeline)

All encoders are deterministic pure functions; identical inputs produce
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .palette import ColorSpec

DEPTH_MAX_METERS = 10.0
FOREGROUND_THRESHOLD = 127.5  # midpoint of the channel-mean range
BOX_COLOR = (255, 0, 0)
BOX_STROKE_BASE = 3  # pixels at 256-px resolution, scaled proportionally


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters with a validity mask.

    Invalid pixels (missing or non-positive source values) are excluded from
    metrics and encode to intensity 0.
    """

    values: np.ndarray  # (H, W) float, meters
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if v.shape != m.shape or v.ndim != 2:
            raise ValueError(f"depth values {v.shape} and valid mask {m.shape} must be equal 2-d shapes")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DepthMap":
        """Treat non-positive entries as invalid."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values, values > 0.0)


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    return img


def stroke_width(resolution: int) -> int:
    """Box outline width in pixels at a given (square) resolution."""
    return max(1, round(BOX_STROKE_BASE * resolution / 256))


# ---------------------------------------------------------------------------
# segmentation


def encode_segmentation(mask: np.ndarray, resolution: int | None = None) -> np.ndarray:
    """Binary mask -> black/white RGB image (foreground white)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-d, got shape {mask.shape}")
    if resolution is not None and mask.shape != (resolution, resolution):
        raise ValueError(f"mask shape {mask.shape} does not match configured resolution {resolution}")
    out = np.where(mask.astype(bool)[..., None], 255, 0).astype(np.uint8)
    return np.repeat(out, 3, axis=2)


def decode_segmentation(img: np.ndarray) -> np.ndarray:
    """Average the three channels and threshold at the midpoint."""
    img = _check_image(img)
    return img.astype(np.float64).mean(axis=2) >= FOREGROUND_THRESHOLD


# ---------------------------------------------------------------------------
# depth


def encode_depth(depth: DepthMap | np.ndarray) -> np.ndarray:
    """Depth map -> gray RGB image via v = floor(d * 255 / 10).

    Requires values in [0, 10] meters. Invalid pixels encode to 0.
    """
    if not isinstance(depth, DepthMap):
        depth = DepthMap(np.asarray(depth, dtype=np.float64), np.ones(np.shape(depth), dtype=bool))
    vals = depth.values
    checked = vals[depth.valid]
    if checked.size and (checked.min() < 0.0 or checked.max() > DEPTH_MAX_METERS):
        raise ValueError(
            f"depth values outside [0, {DEPTH_MAX_METERS}] m: "
            f"min {checked.min():.4f}, max {checked.max():.4f}"
        )
    gray = np.floor(vals * (255.0 / DEPTH_MAX_METERS)).astype(np.int64)
    gray = np.where(depth.valid, np.clip(gray, 0, 255), 0).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def decode_depth(img: np.ndarray) -> DepthMap:
    """Invert the linear depth mapping; all pixels are marked valid."""
    img = _check_image(img)
    meters = img.astype(np.float64).mean(axis=2) * (DEPTH_MAX_METERS / 255.0)
    return DepthMap(meters, np.ones(meters.shape, dtype=bool))


# ---------------------------------------------------------------------------
# classification


def encode_classification(
    present: bool,
    color_pos: ColorSpec,
    color_neg: ColorSpec,
    resolution: int,
) -> np.ndarray:
    """Pure color block: color_pos if the category is present, else color_neg."""
    if color_pos.rgb == color_neg.rgb:
        raise ValueError(f"positive and negative colors must differ, both are {color_pos.rgb}")
    rgb = color_pos.rgb if present else color_neg.rgb
    return np.full((resolution, resolution, 3), rgb, dtype=np.uint8)


def cls_score(img: np.ndarray, c: ColorSpec, metric: str = "l1") -> float:
    """Summed per-pixel distance between an image and a pure color block.

    metric="l1" sums absolute per-channel differences (the written form of
    the score); metric="l2" sums per-pixel Euclidean distances instead and is
    kept for comparison.
    """
    img = _check_image(img).astype(np.int64)
    diff = img - np.asarray(c.rgb, dtype=np.int64)
    if metric == "l1":
        return float(np.abs(diff).sum())
    if metric == "l2":
        return float(np.sqrt((diff.astype(np.float64) ** 2).sum(axis=2)).sum())
    raise ValueError(f"metric must be 'l1' or 'l2', got {metric!r}")


def classify(img: np.ndarray, color_pos: ColorSpec, color_neg: ColorSpec, metric: str = "l1") -> bool:
    """Decision rule: the class whose color block is nearest wins.

    Returns True when the positive color scores no worse than the negative.
    """
    return cls_score(img, color_pos, metric) <= cls_score(img, color_neg, metric)
