"""Task-output scoring.

All metrics aggregate over an aligned list of samples and are invariant to
the order of that list.  Segmentation IoU is accumulated dataset-wide per
category (not averaged per image); detection AP uses greedy
confidence-ordered matching at IoU >= 0.5 with all-point interpolation;
depth ratios use the standard 1.25^k thresholds; classification reduces to
the color-block argmin.
"""

from __future__ import annotations

import logging

import numpy as np

from .boxes import DetectionBox, box_iou
from .codecs import DepthMap, classify
from .palette import ColorSpec

log = logging.getLogger(__name__)

IOU_MATCH_THRESHOLD = 0.5
# gt depths at or below this are treated as holes, not measurements
DEPTH_VALID_FLOOR = 1e-3
DELTA_BASE = 1.25


# ---------------------------------------------------------------------------
# segmentation


def miou_per_category(
    preds: list[np.ndarray], gts: list[np.ndarray], categories: list[str]
) -> dict[str, float]:
    """Per-category IoU with intersections/unions pooled over the dataset."""
    if not (len(preds) == len(gts) == len(categories)):
        raise ValueError(
            f"aligned lists required, got {len(preds)}/{len(gts)}/{len(categories)}"
        )
    inter: dict[str, int] = {}
    union: dict[str, int] = {}
    for pred, gt, cat in zip(preds, gts, categories):
        pred = np.asarray(pred, dtype=bool)
        gt = np.asarray(gt, dtype=bool)
        if pred.shape != gt.shape:
            raise ValueError(f"mask resolution mismatch: {pred.shape} vs {gt.shape}")
        inter[cat] = inter.get(cat, 0) + int(np.sum(pred & gt))
        union[cat] = union.get(cat, 0) + int(np.sum(pred | gt))
    out = {}
    for cat in sorted(union):
        if union[cat] == 0:
            log.info("category %r has empty union everywhere; skipped from mIoU", cat)
            continue
        out[cat] = inter[cat] / union[cat]
    return out


def miou(preds: list[np.ndarray], gts: list[np.ndarray], categories: list[str]) -> float:
    per_cat = miou_per_category(preds, gts, categories)
    if not per_cat:
        return 0.0
    return float(np.mean(list(per_cat.values())))


# ---------------------------------------------------------------------------
# detection


def _interpolated_ap(tp_flags: list[bool], n_gt: int) -> float:
    """Area under the exact precision-recall step curve."""
    if n_gt == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    ranks = np.arange(1, len(tp) + 1, dtype=np.float64)
    recall = tp / n_gt
    precision = tp / ranks
    # precision envelope from the right, integrated over recall increments
    ap = 0.0
    prev_recall = 0.0
    for i in range(len(tp)):
        env = float(np.max(precision[i:]))
        if recall[i] > prev_recall:
            ap += (recall[i] - prev_recall) * env
            prev_recall = recall[i]
    return ap


def ap_per_category(
    preds: list[list[DetectionBox]], gts: list[list[DetectionBox]]
) -> dict[str, float]:
    """AP@0.5 for every category appearing in the ground truth."""
    if len(preds) != len(gts):
        raise ValueError(f"aligned lists required, got {len(preds)} vs {len(gts)}")
    cats = sorted({b.category for boxes in gts for b in boxes})
    out = {}
    for cat in cats:
        gt_by_img = [[b for b in boxes if b.category == cat] for boxes in gts]
        n_gt = sum(len(b) for b in gt_by_img)
        entries = []  # (-conf, -best iou, arrival order, image index, box)
        order = 0
        for img_idx, boxes in enumerate(preds):
            for box in boxes:
                if box.category != cat:
                    continue
                best = max((box_iou(box, g) for g in gt_by_img[img_idx]), default=0.0)
                entries.append((-box.confidence, -best, order, img_idx, box))
                order += 1
        entries.sort(key=lambda e: e[:3])
        matched: list[set[int]] = [set() for _ in gts]
        flags = []
        for _, _, _, img_idx, box in entries:
            candidates = [
                (box_iou(box, g), j)
                for j, g in enumerate(gt_by_img[img_idx])
                if j not in matched[img_idx]
            ]
            best_iou, best_j = max(candidates, default=(0.0, -1))
            if best_iou >= IOU_MATCH_THRESHOLD:
                matched[img_idx].add(best_j)
                flags.append(True)
            else:
                flags.append(False)
        out[cat] = _interpolated_ap(flags, n_gt)
    return out


def map_at_50(preds: list[list[DetectionBox]], gts: list[list[DetectionBox]]) -> float:
    per_cat = ap_per_category(preds, gts)
    if not per_cat:
        return 0.0
    return float(np.mean(list(per_cat.values())))


# ---------------------------------------------------------------------------
# depth


def depth_metrics(pred: DepthMap, gt: DepthMap) -> dict[str, float]:
    """RMSE, mean absolute relative error, and delta accuracies."""
    if pred.values.shape != gt.values.shape:
        raise ValueError(
            f"depth resolution mismatch: {pred.values.shape} vs {gt.values.shape}"
        )
    valid = gt.valid & (gt.values > DEPTH_VALID_FLOOR)
    if not np.any(valid):
        raise ValueError("ground-truth depth has no valid pixels")
    p = pred.values[valid]
    g = gt.values[valid]
    err = p - g
    with np.errstate(divide="ignore", invalid="ignore"):
        # non-positive predictions can never satisfy a ratio threshold
        ratio = np.where(p > 0, np.maximum(p / g, g / p), np.inf)
    out = {
        "rmse": float(np.sqrt(np.mean(err**2))),
        "a_rel": float(np.mean(np.abs(err) / g)),
    }
    for k in (1, 2, 3):
        out[f"delta{k}"] = float(np.mean(ratio < DELTA_BASE**k))
    return out


# ---------------------------------------------------------------------------
# classification


def classification_accuracy(
    outputs: list[np.ndarray],
    expected: list[tuple[ColorSpec, ColorSpec, bool]],
    metric: str = "l1",
) -> float:
    """Fraction of outputs whose nearest color block matches the truth."""
    if len(outputs) != len(expected):
        raise ValueError(f"aligned lists required, got {len(outputs)} vs {len(expected)}")
    if not outputs:
        raise ValueError("need at least one sample")
    correct = 0
    for img, (pos, neg, truth) in zip(outputs, expected):
        if classify(img, pos, neg, metric=metric) == bool(truth):
            correct += 1
    return correct / len(outputs)
