"""Paired geometric augmentation.

One transform is drawn per call and applied identically to the input and
the target: horizontal flip with p=0.5, then upscale to a uniform side
s in [R, 1.125R], then a random R-crop.  Inputs are resampled bilinearly;
targets use nearest neighbor so encoded values stay exact.  Detection
targets are not pixel-warped at all: the box coordinates are transformed
and the red outlines re-drawn on the augmented input, keeping strokes
crisp.

Draw order from the generator is fixed (flip, side, dx, dy) so a seeded
run is reproducible.
"""

from __future__ import annotations

import cv2
import numpy as np

from .boxes import DetectionBox, encode_detection

SCALE_MAX = 1.125
# clipped boxes thinner than this are dropped as unlearnable slivers
MIN_BOX_SIDE = 1.0


def _resize(img: np.ndarray, side: int, nearest: bool) -> np.ndarray:
    interp = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    return cv2.resize(img, (side, side), interpolation=interp)


def _transform_box(
    box: DetectionBox, flip: bool, res: int, scale: float, dx: int, dy: int
) -> DetectionBox | None:
    x0, y0, x1, y1 = box.x_min, box.y_min, box.x_max, box.y_max
    if flip:
        x0, x1 = res - x1, res - x0
    x0, y0, x1, y1 = x0 * scale, y0 * scale, x1 * scale, y1 * scale
    x0, x1 = x0 - dx, x1 - dx
    y0, y1 = y0 - dy, y1 - dy
    # clip to the crop window
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, float(res)), min(y1, float(res))
    if x1 - x0 < MIN_BOX_SIDE or y1 - y0 < MIN_BOX_SIDE:
        return None
    return DetectionBox.from_corners(
        x0, y0, x1, y1, category=box.category, confidence=box.confidence
    )


def augment(
    x: np.ndarray,
    vy: np.ndarray,
    rng: np.random.Generator,
    task_id: str = "segmentation",
    label: dict | None = None,
) -> tuple[np.ndarray, np.ndarray, dict | None] | None:
    """Apply one random flip/resize/crop to the pair (x, v(y)).

    Returns (x', vy', label'); label is passed through unchanged except for
    detection, where box coordinates are transformed and the target
    re-encoded.  Returns None when a detection sample loses every box to
    the crop.
    """
    x = np.asarray(x)
    vy = np.asarray(vy)
    if x.shape != vy.shape:
        raise ValueError(f"input/target shape mismatch: {x.shape} vs {vy.shape}")
    if x.ndim != 3 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected square (R, R, 3) images, got {x.shape}")
    res = x.shape[0]

    flip = bool(rng.random() < 0.5)
    side = int(rng.integers(res, int(SCALE_MAX * res) + 1))
    dx = int(rng.integers(0, side - res + 1))
    dy = int(rng.integers(0, side - res + 1))

    def warp(img: np.ndarray, nearest: bool) -> np.ndarray:
        out = img[:, ::-1] if flip else img
        if side != res:
            out = _resize(out, side, nearest)
        return np.ascontiguousarray(out[dy : dy + res, dx : dx + res])

    x_out = warp(x, nearest=False)

    if task_id != "detection":
        return x_out, warp(vy, nearest=True), label

    if not label or "boxes" not in label:
        raise ValueError("detection augmentation needs label['boxes']")
    scale = side / res
    category = label.get("category", "")
    boxes = []
    for cx, cy, w, h in label["boxes"]:
        moved = _transform_box(
            DetectionBox(cx, cy, w, h, category=category), flip, res, scale, dx, dy
        )
        if moved is not None:
            boxes.append(moved)
    if not boxes:
        return None
    vy_out = encode_detection(x_out, boxes)
    new_label = dict(label)
    new_label["boxes"] = [[b.cx, b.cy, b.w, b.h] for b in boxes]
    return x_out, vy_out, new_label
