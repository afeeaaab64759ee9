"""Instruction-tuning dataset assembly.

A manifest is an ordered list of (input image, target image, instruction)
records persisted as JSON-Lines next to the rendered PNGs, with a sidecar
header recording mode, seed, resolution, and the codec fingerprint.  The
build is fully determined by (sources, mode, seed): every record draws its
randomness from a generator seeded with the dataset seed and the record's
ingest index, so the output bytes are reproducible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from .boxes import DetectionBox, encode_detection
from .codecs import (
    DEPTH_MAX_METERS,
    DepthMap,
    encode_classification,
    encode_depth,
    encode_segmentation,
)
from .palette import color, sample_color_pair
from .prompts import TASKS, Instruction, ParaphraseBank, render_fixed, render_rephrased
from .sources import IngestRecord, SourceSpec, ingest
from .utils import canonical_json, fingerprint, load_png_gray16, load_png_rgb, save_png

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MODES = ("fp", "rp")

# depth PNG fixtures hold millimeters in uint16
MM_PER_METER = 1000.0


def codec_fingerprint() -> str:
    """Fingerprint of the visual encoding conventions a manifest bakes in."""
    from . import codecs
    from .palette import PALETTE

    return fingerprint(
        {
            "depth_max_meters": codecs.DEPTH_MAX_METERS,
            "foreground_threshold": codecs.FOREGROUND_THRESHOLD,
            "box_color": list(codecs.BOX_COLOR),
            "box_stroke_base": codecs.BOX_STROKE_BASE,
            "palette": {k: list(v.rgb) for k, v in PALETTE.items()},
        }
    )


@dataclass(frozen=True)
class TaskSample:
    """One (x, v(y), instruction) record; paths relative to the manifest dir."""

    input_path: str
    target_path: str
    instruction: Instruction
    task_id: str
    raw_label: dict
    split: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task {self.task_id!r}")
        if self.task_id != self.instruction.task_id:
            raise ValueError(
                f"record task {self.task_id!r} != instruction task {self.instruction.task_id!r}"
            )
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        return {
            "input_path": self.input_path,
            "target_path": self.target_path,
            "instruction": self.instruction.to_json(),
            "task_id": self.task_id,
            "raw_label": self.raw_label,
            "split": self.split,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSample":
        return cls(
            input_path=obj["input_path"],
            target_path=obj["target_path"],
            instruction=Instruction.from_json(obj["instruction"]),
            task_id=obj["task_id"],
            raw_label=obj["raw_label"],
            split=obj["split"],
            meta=obj.get("meta", {}),
        )


def header_path(manifest_path: str | Path) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.stem + ".header.json")


@dataclass
class Manifest:
    """Ordered record list plus the generation provenance."""

    records: list[TaskSample]
    mode: str
    seed: int
    resolution: int
    codec: str = field(default_factory=codec_fingerprint)
    root: str = "."  # directory record paths are relative to; not serialized

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.records:
            raise ValueError("manifest must contain at least one record")

    def header(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "resolution": self.resolution,
            "codec": self.codec,
            "record_count": len(self.records),
        }

    def resolve(self, rel: str) -> Path:
        return Path(self.root) / rel

    def split_records(self, split: str) -> list[TaskSample]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        lines = "".join(canonical_json(r.to_json()) + "\n" for r in self.records)
        from .utils import atomic_write_text

        atomic_write_text(path, lines)
        atomic_write_text(header_path(path), canonical_json(self.header()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        with open(header_path(path), "r", encoding="utf-8") as fh:
            head = json.load(fh)
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(TaskSample.from_json(json.loads(line)))
        return cls(
            records=records,
            mode=head["mode"],
            seed=head["seed"],
            resolution=head["resolution"],
            codec=head["codec"],
            root=str(path.parent),
        )


# ---------------------------------------------------------------------------
# building


def _resize_input(img: np.ndarray, res: int) -> np.ndarray:
    if img.shape[:2] == (res, res):
        return img
    return cv2.resize(img, (res, res), interpolation=cv2.INTER_LINEAR)


def _resize_nearest(img: np.ndarray, res: int) -> np.ndarray:
    if img.shape[:2] == (res, res):
        return img
    return cv2.resize(img, (res, res), interpolation=cv2.INTER_NEAREST)


def _instruction(
    mode: str,
    task_id: str,
    rng: np.random.Generator,
    bank: ParaphraseBank | None,
    category: str | None = None,
    colors: tuple[str, str] | None = None,
) -> Instruction:
    if mode == "fp":
        return render_fixed(task_id, category, colors)
    return render_rephrased(task_id, category, colors, seed=rng, bank=bank)


def _load_depth_meters(path: str | Path) -> np.ndarray:
    raw = load_png_gray16(path).astype(np.float64)
    return raw / MM_PER_METER


def build_manifest(
    sources: list[SourceSpec],
    mode: str,
    seed: int,
    out_dir: str | Path,
    resolution: int = 64,
    bank: ParaphraseBank | None = None,
) -> Manifest:
    """Pool sources into one instruction-tuning dataset under out_dir.

    Every label is rendered to a target PNG; classification records get a
    1:1 negative partner naming an absent category (target = the negative
    color block).  Codec failures are hard errors: a label that cannot be
    encoded would poison training.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not sources:
        raise ValueError("need at least one source")
    out_dir = Path(out_dir)
    data_dir = out_dir / "data"

    ingested: list[IngestRecord] = []
    for spec in sources:
        ingested.extend(ingest(spec))
    if not ingested:
        raise ValueError("sources produced no records")

    records: list[TaskSample] = []
    for idx, rec in enumerate(ingested):
        rng = np.random.default_rng([seed, idx])
        inp = _resize_input(load_png_rgb(rec.image_path), resolution)
        base = f"{rec.task_id}-{idx:06d}"
        in_rel = f"data/{base}-in.png"
        save_png(out_dir / in_rel, inp)
        meta = {"image_id": rec.image_id, "ingest_index": idx}
        if rec.split_hint is not None:
            meta["split_hint"] = rec.split_hint
        split = rec.split_hint if rec.split_hint in SPLITS else "train"

        if rec.task_id == "segmentation":
            mask_img = load_png_rgb(rec.label["mask_path"])
            mask = _resize_nearest(mask_img, resolution)[:, :, 0] > 127
            target = encode_segmentation(mask, resolution)
            instr = _instruction(mode, "segmentation", rng, bank, category=rec.label["category"])
            raw = {"category": rec.label["category"]}
            entries = [(target, instr, raw)]

        elif rec.task_id == "detection":
            src = load_png_rgb(rec.image_path)
            fy = resolution / src.shape[0]
            fx = resolution / src.shape[1]
            boxes = []
            for cx, cy, w, h in rec.label["boxes"]:
                box = DetectionBox(cx, cy, w, h, category=rec.label["category"])
                boxes.append(box.scaled(fx, fy).clamped(resolution, resolution))
            target = encode_detection(inp, boxes)
            instr = _instruction(mode, "detection", rng, bank, category=rec.label["category"])
            raw = {
                "category": rec.label["category"],
                "boxes": [[b.cx, b.cy, b.w, b.h] for b in boxes],
            }
            entries = [(target, instr, raw)]

        elif rec.task_id == "depth":
            meters = _resize_nearest(_load_depth_meters(rec.label["depth_path"]), resolution)
            depth = DepthMap.from_values(np.clip(meters, 0.0, DEPTH_MAX_METERS))
            target = encode_depth(depth)
            instr = _instruction(mode, "depth", rng, bank)
            entries = [(target, instr, {})]

        elif rec.task_id == "classification":
            cat = rec.label["category"]
            absent = [c for c in rec.label["all_categories"] if c != cat]
            # draw order: positive colors, negative category, negative colors
            pos_colors = sample_color_pair(rng)
            neg_cat = absent[int(rng.integers(len(absent)))] if absent else None
            neg_colors = sample_color_pair(rng)
            entries = []
            target = encode_classification(True, color(pos_colors[0]), color(pos_colors[1]), resolution)
            instr = _instruction(mode, "classification", rng, bank, category=cat, colors=pos_colors)
            entries.append(
                (target, instr, {
                    "category": cat, "present": True,
                    "color_pos": pos_colors[0], "color_neg": pos_colors[1],
                })
            )
            if neg_cat is not None:
                target = encode_classification(
                    False, color(neg_colors[0]), color(neg_colors[1]), resolution
                )
                instr = _instruction(
                    mode, "classification", rng, bank, category=neg_cat, colors=neg_colors
                )
                entries.append(
                    (target, instr, {
                        "category": neg_cat, "present": False,
                        "color_pos": neg_colors[0], "color_neg": neg_colors[1],
                    })
                )
        else:  # pragma: no cover - TASKS is closed
            raise ValueError(f"unknown task {rec.task_id!r}")

        for sub, (target, instr, raw) in enumerate(entries):
            tgt_rel = f"data/{base}-tgt{sub}.png" if len(entries) > 1 else f"data/{base}-tgt.png"
            save_png(out_dir / tgt_rel, target)
            records.append(
                TaskSample(
                    input_path=in_rel,
                    target_path=tgt_rel,
                    instruction=instr,
                    task_id=rec.task_id,
                    raw_label=raw,
                    split=split,
                    meta=meta,
                )
            )

    return Manifest(
        records=records, mode=mode, seed=seed, resolution=resolution, root=str(out_dir)
    )


# ---------------------------------------------------------------------------
# split assignment


def _largest_remainder(n: int, ratios: tuple[float, float, float]) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    short = n - sum(counts)
    # hand leftovers to the largest fractional parts; ties go left to right
    order = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def split_assign(manifest: Manifest, policy: dict) -> Manifest:
    """Label every record train/val/test.

    policy {"kind": "source"} copies the ingest-time split hints verbatim;
    policy {"kind": "ratio", "ratios": [a, b, c], "seed": s} assigns whole
    source images (never single records) so no image leaks across splits.
    """
    kind = policy.get("kind")
    if kind == "source":
        new = []
        for rec in manifest.records:
            hint = rec.meta.get("split_hint")
            if hint not in SPLITS:
                raise ValueError(
                    f"record {rec.input_path} has no usable split hint ({hint!r})"
                )
            new.append(replace(rec, split=hint))
        return replace(manifest, records=new)

    if kind == "ratio":
        ratios = tuple(float(r) for r in policy["ratios"])
        if len(ratios) != 3:
            raise ValueError("ratios must be (train, val, test)")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
        rng = np.random.default_rng(policy.get("seed", 0))
        ids: list[str] = []
        seen = set()
        for rec in manifest.records:
            image_id = rec.meta.get("image_id", rec.input_path)
            if image_id not in seen:
                seen.add(image_id)
                ids.append(image_id)
        perm = rng.permutation(len(ids))
        counts = _largest_remainder(len(ids), ratios)
        assign: dict[str, str] = {}
        pos = 0
        for split, cnt in zip(SPLITS, counts):
            for j in range(pos, pos + cnt):
                assign[ids[int(perm[j])]] = split
            pos += cnt
        new = [
            replace(rec, split=assign[rec.meta.get("image_id", rec.input_path)])
            for rec in manifest.records
        ]
        return replace(manifest, records=new)

    raise ValueError(f"unknown split policy kind {kind!r}")
