"""Bounding boxes: drawing red outlines onto images and reading them back.

Boxes are center-based (cx, cy, w, h) in pixel units. Drawing paints an
axis-aligned rectangle outline in pure red; decoding runs a denoise ->
red-isolation -> contour pipeline and corrects for the stroke width so a
noise-free round trip recovers the drawn box exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np

from .codecs import BOX_COLOR, stroke_width

# HSV bands that count as "red", on the uint8 scale cv2 uses
# (hue in [0, 180), saturation/value in [0, 255]).
RED_HUE_LOW = 10  # 20 degrees
RED_HUE_HIGH = 170  # 340 degrees
RED_SAT_MIN = 128  # 0.5
RED_VAL_MIN = 77  # 0.3

MIN_RECT_AREA_RATIO = 0.15
MIN_PERIMETER_FIT = 0.6
GRAY_THRESHOLD = 30  # pure red keeps luminance ~76 after isolation

MEDIAN_KERNEL_BASE = 5  # at 256-px resolution
BILATERAL_DIAMETER_BASE = 7
BILATERAL_SIGMA_COLOR = 50
BILATERAL_SIGMA_SPACE = 50


@dataclass(frozen=True)
class DetectionBox:
    """Axis-aligned box: center (cx, cy), extent (w, h), all in pixels."""

    cx: float
    cy: float
    w: float
    h: float
    category: str = ""
    confidence: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def x_min(self) -> float:
        return self.cx - self.w / 2

    @property
    def y_min(self) -> float:
        return self.cy - self.h / 2

    @property
    def x_max(self) -> float:
        return self.cx + self.w / 2

    @property
    def y_max(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_pixel_rect(cls, x0: int, y0: int, pw: int, ph: int, **kw) -> "DetectionBox":
        """Box covering pixel columns x0..x0+pw-1 and rows y0..y0+ph-1."""
        return cls(cx=x0 + pw / 2, cy=y0 + ph / 2, w=float(pw), h=float(ph), **kw)

    @classmethod
    def from_corners(cls, x_min: float, y_min: float, x_max: float, y_max: float, **kw) -> "DetectionBox":
        return cls(
            cx=(x_min + x_max) / 2,
            cy=(y_min + y_max) / 2,
            w=x_max - x_min,
            h=y_max - y_min,
            **kw,
        )

    def clamped(self, width: int, height: int) -> "DetectionBox":
        """Intersect with the image rectangle [0, width] x [0, height]."""
        x0 = max(self.x_min, 0.0)
        y0 = max(self.y_min, 0.0)
        x1 = min(self.x_max, float(width))
        y1 = min(self.y_max, float(height))
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"box {self} lies entirely outside a {width}x{height} image")
        return DetectionBox.from_corners(x0, y0, x1, y1, category=self.category, confidence=self.confidence)

    def scaled(self, fx: float, fy: float) -> "DetectionBox":
        return replace(self, cx=self.cx * fx, cy=self.cy * fy, w=self.w * fx, h=self.h * fy)

    def to_json(self) -> dict:
        return {
            "cx": self.cx,
            "cy": self.cy,
            "w": self.w,
            "h": self.h,
            "category": self.category,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionBox":
        return cls(
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            w=float(obj["w"]),
            h=float(obj["h"]),
            category=str(obj.get("category", "")),
            confidence=float(obj.get("confidence", 1.0)),
        )


def box_iou(a: DetectionBox, b: DetectionBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def pixel_extents(box: DetectionBox) -> tuple[int, int, int, int]:
    """Integer pixel rectangle (x0, y0, pw, ph) a box rasterizes to.

    Covers pw x ph whole pixels; from_pixel_rect round-trips exactly.
    """
    pw = max(1, round(box.w))
    ph = max(1, round(box.h))
    x0 = round(box.cx - box.w / 2)
    y0 = round(box.cy - box.h / 2)
    return x0, y0, pw, ph


# ---------------------------------------------------------------------------
# drawing


def _paint_ring(img: np.ndarray, xa: int, ya: int, xb: int, yb: int) -> None:
    # 1-px rectangle boundary with inclusive corners, clipped to the image
    h, w = img.shape[:2]
    if xb < xa or yb < ya:
        return
    cxa, cxb = max(xa, 0), min(xb, w - 1)
    cya, cyb = max(ya, 0), min(yb, h - 1)
    if cxa > cxb or cya > cyb:
        return
    if 0 <= ya < h:
        img[ya, cxa : cxb + 1] = BOX_COLOR
    if 0 <= yb < h:
        img[yb, cxa : cxb + 1] = BOX_COLOR
    if 0 <= xa < w:
        img[cya : cyb + 1, xa] = BOX_COLOR
    if 0 <= xb < w:
        img[cya : cyb + 1, xb] = BOX_COLOR


def encode_detection(
    img: np.ndarray,
    boxes: list[DetectionBox],
    stroke: int | None = None,
) -> np.ndarray:
    """Copy of img with each box outlined in pure red.

    The stroke is centered on the box boundary: width s paints rings at
    offsets -(s//2) .. s-1-s//2 around the rasterized rectangle.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]
    if stroke is None:
        stroke = stroke_width(min(h, w))
    out = img.copy()
    for box in boxes:
        if box.x_min < 0 or box.y_min < 0 or box.x_max > w or box.y_max > h:
            raise ValueError(f"box {box} exceeds {w}x{h} image bounds")
        x0, y0, pw, ph = pixel_extents(box)
        for d in range(-(stroke // 2), stroke - stroke // 2):
            _paint_ring(out, x0 - d, y0 - d, x0 + pw - 1 + d, y0 + ph - 1 + d)
    return out


# ---------------------------------------------------------------------------
# decoding


def _scaled_odd(base: int, resolution: int) -> int:
    k = round(base * resolution / 256)
    return k if k % 2 == 1 else k + 1


def _red_mask(img: np.ndarray) -> np.ndarray:
    hsv = cv2.cvtColor(img, cv2.COLOR_RGB2HSV)
    lo = cv2.inRange(hsv, (0, RED_SAT_MIN, RED_VAL_MIN), (RED_HUE_LOW, 255, 255))
    hi = cv2.inRange(hsv, (RED_HUE_HIGH, RED_SAT_MIN, RED_VAL_MIN), (179, 255, 255))
    return cv2.bitwise_or(lo, hi)


def _perimeter_fit(mask: np.ndarray, x: int, y: int, bw: int, bh: int, tol: int) -> float:
    """Fraction of the bounding rectangle's boundary lying within tol of mask pixels."""
    k = 2 * tol + 1
    fat = cv2.dilate(mask, np.ones((k, k), np.uint8))
    top = fat[y, x : x + bw]
    bottom = fat[y + bh - 1, x : x + bw]
    left = fat[y : y + bh, x]
    right = fat[y : y + bh, x + bw - 1]
    border = np.concatenate([top, bottom, left, right])
    return float(np.count_nonzero(border)) / border.size


def decode_detection(
    img: np.ndarray,
    reference: list[DetectionBox] | None = None,
    category: str = "",
    stroke: int | None = None,
) -> list[DetectionBox]:
    """Recover red-outlined boxes from an image.

    Pipeline: median filter, bilateral filter, HSV red isolation, grayscale
    threshold, binarize, external contours, rectangularity filter. Filter
    kernels shrink with resolution and are skipped below 3 px. When a
    reference list is given, only candidates overlapping some reference box
    with IoU > 0.5 survive. Confidence is the perimeter-fit ratio.
    """
    img = np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]
    res = min(h, w)
    if stroke is None:
        stroke = stroke_width(res)

    med_k = _scaled_odd(MEDIAN_KERNEL_BASE, res)
    if med_k >= 3:
        img = cv2.medianBlur(img, med_k)
    bil_d = round(BILATERAL_DIAMETER_BASE * res / 256)
    if bil_d >= 3:
        img = cv2.bilateralFilter(img, bil_d, BILATERAL_SIGMA_COLOR, BILATERAL_SIGMA_SPACE)

    mask = _red_mask(img)
    isolated = cv2.bitwise_and(img, img, mask=mask)
    gray = cv2.cvtColor(isolated, cv2.COLOR_RGB2GRAY)
    binary = (gray >= GRAY_THRESHOLD).astype(np.uint8) * 255

    contours, _ = cv2.findContours(binary, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
    outset = (stroke - 1) // 2  # how far the stroke extends beyond the box
    tol = max(1, stroke)
    out: list[DetectionBox] = []
    for contour in contours:
        x, y, bw, bh = cv2.boundingRect(contour)
        if min(bw, bh) < max(3, 2 * outset + 2):
            continue
        area_ratio = cv2.contourArea(contour) / (bw * bh)
        fit = _perimeter_fit(binary, x, y, bw, bh, tol)
        if area_ratio < MIN_RECT_AREA_RATIO or fit < MIN_PERIMETER_FIT:
            continue
        px = x + outset
        py = y + outset
        pw = bw - 2 * outset
        ph = bh - 2 * outset
        box = DetectionBox.from_pixel_rect(px, py, pw, ph, category=category, confidence=min(1.0, fit))
        if reference is not None and not any(box_iou(box, ref) > 0.5 for ref in reference):
            continue
        out.append(box)
    out.sort(key=lambda b: (-b.confidence, b.cx, b.cy))
    return out
