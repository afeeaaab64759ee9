"""Synthetic colored-shape corpus.

Generates desk-scale source datasets for all four tasks in the exact
on-disk layouts the ingesters expect, so the full pipeline (ingest ->
manifest -> train -> eval) can run without any external data.  Scenes are
single flat-colored shapes (circle / square / triangle) on a dark gray
background; shapes never use red, which is reserved for detection
outlines.  Depth scenes place one or two shapes whose depth shrinks as
their size grows (background fixed at the far plane).

Everything is a pure function of (seed, counts, resolution).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codecs import DEPTH_MAX_METERS
from .manifest import MM_PER_METER
from .palette import PALETTE
from .sources import SourceSpec
from .utils import save_png

CATEGORIES = ("circle", "square", "triangle")
# red is the detection marker; shapes must never wear it
FILL_COLORS = ("green", "blue", "yellow", "cyan", "magenta", "white")

DEFAULT_COUNTS = {
    "segmentation": 600,
    "detection": 500,
    "depth": 400,
    "classification": 250,
}

_TASK_INDEX = {"segmentation": 0, "detection": 1, "depth": 2, "classification": 3}


@dataclass(frozen=True)
class Shape:
    """One shape instance inside integer pixel box x0..x0+pw-1, y0..y0+ph-1."""

    category: str
    x0: int
    y0: int
    pw: int
    ph: int


def shape_mask(shape: Shape, resolution: int) -> np.ndarray:
    """Boolean occupancy grid over pixel centers."""
    ys, xs = np.mgrid[0:resolution, 0:resolution].astype(np.float64)
    x1 = shape.x0 + shape.pw - 1
    y1 = shape.y0 + shape.ph - 1
    if shape.category == "square":
        return (xs >= shape.x0) & (xs <= x1) & (ys >= shape.y0) & (ys <= y1)
    if shape.category == "circle":
        cx = (shape.x0 + x1) / 2.0
        cy = (shape.y0 + y1) / 2.0
        rx = max((shape.pw - 1) / 2.0, 0.5)
        ry = max((shape.ph - 1) / 2.0, 0.5)
        return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    if shape.category == "triangle":
        ax, ay = (shape.x0 + x1) / 2.0, float(shape.y0)  # apex
        bx, by = float(shape.x0), float(y1)  # base left
        cx, cy = float(x1), float(y1)  # base right

        def cross(ox, oy, ex, ey):
            return (ex - ox) * (ys - oy) - (ey - oy) * (xs - ox)

        s1 = cross(ax, ay, bx, by)
        s2 = cross(bx, by, cx, cy)
        s3 = cross(cx, cy, ax, ay)
        return ((s1 <= 0) & (s2 <= 0) & (s3 <= 0)) | ((s1 >= 0) & (s2 >= 0) & (s3 >= 0))
    raise ValueError(f"unknown shape category {shape.category!r}")


def _boxes_overlap(a: Shape, b: Shape) -> bool:
    return not (
        a.x0 + a.pw <= b.x0
        or b.x0 + b.pw <= a.x0
        or a.y0 + a.ph <= b.y0
        or b.y0 + b.ph <= a.y0
    )


def _sample_shape(
    rng: np.random.Generator,
    resolution: int,
    category: str,
    avoid: list[Shape] = (),
) -> Shape | None:
    lo = max(resolution // 5, 6)
    hi = max(resolution // 3, lo + 2)
    for _ in range(50):
        pw = int(rng.integers(lo, hi + 1))
        ph = int(rng.integers(lo, hi + 1))
        x0 = int(rng.integers(2, resolution - pw - 1))
        y0 = int(rng.integers(2, resolution - ph - 1))
        cand = Shape(category, x0, y0, pw, ph)
        if all(not _boxes_overlap(cand, s) for s in avoid):
            return cand
    return None


def render_scene(
    rng: np.random.Generator, resolution: int, shapes: list[Shape]
) -> np.ndarray:
    """Flat dark background with each shape filled in a non-red color."""
    bg = int(rng.integers(15, 61))
    img = np.full((resolution, resolution, 3), bg, dtype=np.uint8)
    for shape in shapes:
        fill = PALETTE[FILL_COLORS[int(rng.integers(len(FILL_COLORS)))]].rgb
        img[shape_mask(shape, resolution)] = fill
    return img


def _scene_rng(seed: int, task: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, _TASK_INDEX[task], index])


def write_segmentation_source(root: Path, n: int, seed: int, resolution: int) -> SourceSpec:
    root = Path(root)
    for i in range(n):
        rng = _scene_rng(seed, "segmentation", i)
        cat = CATEGORIES[i % len(CATEGORIES)]
        shape = _sample_shape(rng, resolution, cat)
        img = render_scene(rng, resolution, [shape])
        stem = f"seg-{i:05d}"
        save_png(root / "images" / f"{stem}.png", img)
        mask = shape_mask(shape, resolution).astype(np.uint8) * 255
        save_png(root / "masks" / stem / f"{cat}.png", np.repeat(mask[..., None], 3, axis=2))
    return SourceSpec(task_id="segmentation", format="mask_dir", root=str(root))


def write_detection_source(root: Path, n: int, seed: int, resolution: int) -> SourceSpec:
    root = Path(root)
    images = []
    annotations = []
    for i in range(n):
        rng = _scene_rng(seed, "detection", i)
        cat = CATEGORIES[i % len(CATEGORIES)]
        shape = _sample_shape(rng, resolution, cat)
        img = render_scene(rng, resolution, [shape])
        stem = f"det-{i:05d}"
        save_png(root / "images" / f"{stem}.png", img)
        images.append(
            {"id": i, "file_name": f"{stem}.png", "width": resolution, "height": resolution}
        )
        annotations.append(
            {
                "id": i,
                "image_id": i,
                "category_id": CATEGORIES.index(cat) + 1,
                "bbox": [float(shape.x0), float(shape.y0), float(shape.pw), float(shape.ph)],
            }
        )
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": k + 1, "name": c} for k, c in enumerate(CATEGORIES)],
    }
    root.mkdir(parents=True, exist_ok=True)
    from .utils import atomic_write_text

    atomic_write_text(root / "annotations.json", json.dumps(doc, sort_keys=True))
    return SourceSpec(task_id="detection", format="coco_json", root=str(root))


def shape_depth(pw: int, ph: int, resolution: int) -> float:
    """Bigger shapes sit closer; range well inside [0, far plane]."""
    lo = max(resolution // 5, 6)
    hi = max(resolution // 3, lo + 2)
    size = (pw + ph) / 2.0
    frac = np.clip((size - lo) / max(hi - lo, 1), 0.0, 1.0)
    return float(9.5 - 7.5 * frac)


def write_depth_source(root: Path, n: int, seed: int, resolution: int) -> SourceSpec:
    root = Path(root)
    for i in range(n):
        rng = _scene_rng(seed, "depth", i)
        n_shapes = int(rng.integers(1, 3))
        shapes: list[Shape] = []
        for _ in range(n_shapes):
            cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
            cand = _sample_shape(rng, resolution, cat, avoid=shapes)
            if cand is not None:
                shapes.append(cand)
        img = render_scene(rng, resolution, shapes)
        depth = np.full((resolution, resolution), DEPTH_MAX_METERS, dtype=np.float64)
        for shape in shapes:
            depth[shape_mask(shape, resolution)] = shape_depth(shape.pw, shape.ph, resolution)
        stem = f"dep-{i:05d}"
        save_png(root / "images" / f"{stem}.png", img)
        save_png(root / "depth" / f"{stem}.png", np.round(depth * MM_PER_METER).astype(np.uint16))
    return SourceSpec(task_id="depth", format="depth_png_dir", root=str(root))


def write_classification_source(root: Path, n: int, seed: int, resolution: int) -> SourceSpec:
    root = Path(root)
    for i in range(n):
        rng = _scene_rng(seed, "classification", i)
        cat = CATEGORIES[i % len(CATEGORIES)]
        shape = _sample_shape(rng, resolution, cat)
        img = render_scene(rng, resolution, [shape])
        save_png(root / cat / f"im-{i:05d}.png", img)
    return SourceSpec(task_id="classification", format="folder_labels", root=str(root))


def make_synthetic_sources(
    root: str | Path,
    seed: int = 0,
    counts: dict[str, int] | None = None,
    resolution: int = 64,
) -> list[SourceSpec]:
    """Write all four fixture datasets under root; returns their specs."""
    counts = dict(DEFAULT_COUNTS if counts is None else counts)
    root = Path(root)
    writers = {
        "segmentation": (write_segmentation_source, "seg"),
        "detection": (write_detection_source, "det"),
        "depth": (write_depth_source, "depth"),
        "classification": (write_classification_source, "cls"),
    }
    specs = []
    for task, (writer, sub) in writers.items():
        n = counts.get(task, 0)
        if n > 0:
            specs.append(writer(root / sub, n, seed, resolution))
    return specs
