"""Source dataset ingestion.

Each supported on-disk layout is normalized into (image, label, task)
triples.  Per-category tasks (segmentation, detection) emit one triple
per (image, category) pair because every instruction names exactly one
category.

Layouts:

- ``mask_dir`` (segmentation): ``root/images/*.png`` plus binary masks at
  ``root/masks/<image stem>/<category>.png`` (nonzero = foreground).
- ``coco_json`` (detection): ``root/annotations.json`` in COCO object
  detection form (images / annotations with top-left ``bbox`` /
  categories), image files under ``root/images/``.
- ``depth_png_dir`` (depth): ``root/images/*.png`` plus 16-bit PNGs at
  ``root/depth/<image stem>.png`` holding depth in millimeters.
- ``folder_labels`` (classification): ``root/<category>/*.png``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .prompts import TASKS

log = logging.getLogger(__name__)

FORMATS = ("coco_json", "mask_dir", "depth_png_dir", "folder_labels")

# which layouts can express which task's labels
ADMISSIBLE = {
    "segmentation": ("mask_dir",),
    "detection": ("coco_json",),
    "depth": ("depth_png_dir",),
    "classification": ("folder_labels",),
}


@dataclass(frozen=True)
class SourceSpec:
    """One ingestible dataset root."""

    task_id: str
    format: str
    root: str
    # optional fixed split assignment: split name -> list of image ids
    splits: dict[str, list[str]] | None = None

    def __post_init__(self):
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task {self.task_id!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        if self.format not in ADMISSIBLE[self.task_id]:
            raise ValueError(
                f"format {self.format!r} cannot express {self.task_id!r} labels"
            )

    def to_json(self) -> dict:
        out = {"task_id": self.task_id, "format": self.format, "root": self.root}
        if self.splits is not None:
            out["splits"] = self.splits
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SourceSpec":
        return cls(
            task_id=obj["task_id"],
            format=obj["format"],
            root=obj["root"],
            splits=obj.get("splits"),
        )


@dataclass(frozen=True)
class IngestRecord:
    """Normalized (x, y, m) triple plus bookkeeping.

    ``image_id`` groups every record derived from the same source image so
    split assignment can keep them together.  ``label`` is task-specific:

    - segmentation: {"category", "mask_path"}
    - detection:    {"category", "boxes": [[cx, cy, w, h], ...]} in source
                    pixel coordinates
    - depth:        {"depth_path"}
    - classification: {"category", "all_categories": [...]}
    """

    image_path: str
    label: dict
    task_id: str
    image_id: str
    split_hint: str | None = None


def _split_hint(spec: SourceSpec, image_id: str) -> str | None:
    if spec.splits is None:
        return None
    for name, ids in spec.splits.items():
        if image_id in ids:
            return name
    return None


def _require_image(path: Path) -> None:
    if not path.is_file():
        raise FileNotFoundError(f"missing image file: {path}")


def _ingest_mask_dir(spec: SourceSpec) -> list[IngestRecord]:
    root = Path(spec.root)
    images = sorted((root / "images").glob("*.png"))
    records = []
    skipped = 0
    for img in images:
        _require_image(img)
        mask_dir = root / "masks" / img.stem
        if not mask_dir.is_dir():
            skipped += 1
            log.warning("no mask directory for %s; skipped", img.name)
            continue
        for mask in sorted(mask_dir.glob("*.png")):
            records.append(
                IngestRecord(
                    image_path=str(img),
                    label={"category": mask.stem, "mask_path": str(mask)},
                    task_id="segmentation",
                    image_id=img.stem,
                    split_hint=_split_hint(spec, img.stem),
                )
            )
    if skipped:
        log.warning("mask_dir ingest skipped %d images without masks", skipped)
    if not records:
        log.warning("mask_dir source %s produced no records", spec.root)
    return records


def _ingest_coco_json(spec: SourceSpec) -> list[IngestRecord]:
    root = Path(spec.root)
    ann_path = root / "annotations.json"
    if not ann_path.is_file():
        raise FileNotFoundError(f"missing annotation file: {ann_path}")
    with open(ann_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    cat_names = {c["id"]: c["name"] for c in doc.get("categories", [])}
    image_info = {im["id"]: im for im in doc.get("images", [])}

    # bucket boxes per (image, category); center-based coordinates
    boxes: dict[tuple[int, int], list[list[float]]] = {}
    skipped = 0
    for ann in doc.get("annotations", []):
        try:
            image_id = ann["image_id"]
            cat_id = ann["category_id"]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError):
            skipped += 1
            continue
        if w <= 0 or h <= 0 or image_id not in image_info or cat_id not in cat_names:
            skipped += 1
            continue
        boxes.setdefault((image_id, cat_id), []).append(
            [x + w / 2.0, y + h / 2.0, w, h]
        )
    if skipped:
        log.warning("coco_json ingest skipped %d unparseable annotations", skipped)

    records = []
    for (image_id, cat_id) in sorted(boxes):
        info = image_info[image_id]
        img = root / "images" / info["file_name"]
        _require_image(img)
        records.append(
            IngestRecord(
                image_path=str(img),
                label={"category": cat_names[cat_id], "boxes": boxes[(image_id, cat_id)]},
                task_id="detection",
                image_id=img.stem,
                split_hint=_split_hint(spec, img.stem),
            )
        )
    if not records:
        log.warning("coco_json source %s produced no records", spec.root)
    return records


def _ingest_depth_png_dir(spec: SourceSpec) -> list[IngestRecord]:
    root = Path(spec.root)
    records = []
    skipped = 0
    for img in sorted((root / "images").glob("*.png")):
        _require_image(img)
        depth = root / "depth" / f"{img.stem}.png"
        if not depth.is_file():
            skipped += 1
            log.warning("no depth map for %s; skipped", img.name)
            continue
        records.append(
            IngestRecord(
                image_path=str(img),
                label={"depth_path": str(depth)},
                task_id="depth",
                image_id=img.stem,
                split_hint=_split_hint(spec, img.stem),
            )
        )
    if skipped:
        log.warning("depth_png_dir ingest skipped %d images without depth", skipped)
    if not records:
        log.warning("depth_png_dir source %s produced no records", spec.root)
    return records


def _ingest_folder_labels(spec: SourceSpec) -> list[IngestRecord]:
    root = Path(spec.root)
    categories = sorted(p.name for p in root.iterdir() if p.is_dir())
    records = []
    for cat in categories:
        for img in sorted((root / cat).glob("*.png")):
            _require_image(img)
            records.append(
                IngestRecord(
                    image_path=str(img),
                    label={"category": cat, "all_categories": categories},
                    task_id="classification",
                    # stems may repeat across class folders
                    image_id=f"{cat}/{img.stem}",
                    split_hint=_split_hint(spec, f"{cat}/{img.stem}"),
                )
            )
    if not records:
        log.warning("folder_labels source %s produced no records", spec.root)
    return records


_INGESTERS = {
    "mask_dir": _ingest_mask_dir,
    "coco_json": _ingest_coco_json,
    "depth_png_dir": _ingest_depth_png_dir,
    "folder_labels": _ingest_folder_labels,
}


def ingest(spec: SourceSpec) -> list[IngestRecord]:
    """Normalize one source into (image, label, task) records.

    Unparseable annotations are skipped with a logged warning; missing
    image files are a hard error.
    """
    root = Path(spec.root)
    if not root.is_dir():
        raise FileNotFoundError(f"source root does not exist: {root}")
    return _INGESTERS[spec.format](spec)
