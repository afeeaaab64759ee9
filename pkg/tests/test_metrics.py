from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from taskpaint.boxes import DetectionBox, box_iou
from taskpaint.codecs import DepthMap
from taskpaint.metrics import (
    ap_per_category,
    classification_accuracy,
    depth_metrics,
    map_at_50,
    miou,
    miou_per_category,
)
from taskpaint.palette import color


# ---------------------------------------------------------------------------
# oracles


def oracle_ap(flags, n_gt):
    """All-point interpolated AP in exact rational arithmetic.

    Walks the PR curve point by point, carrying the running precision
    envelope computed from the right.
    """
    if n_gt == 0:
        return Fraction(0)
    points = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += int(flag)
        points.append((Fraction(tp, n_gt), Fraction(tp, k)))
    ap = Fraction(0)
    prev_r = Fraction(0)
    for i, (r, _) in enumerate(points):
        if r > prev_r:
            envelope = max(p for _, p in points[i:])
            ap += (r - prev_r) * envelope
            prev_r = r
    return ap


def oracle_flags(pred_lists, gt_lists, threshold=0.5):
    """Enumerate every sequential assignment; require they all agree.

    Predictions are processed in descending confidence. Each may claim any
    still-unmatched GT in its image with IoU >= threshold. On instances
    where every pred is eligible for at most one GT the flag sequence is
    unique; the enumeration asserts that uniqueness.
    """
    entries = []
    for img, preds in enumerate(pred_lists):
        for order, p in enumerate(preds):
            entries.append((-p.confidence, order, img, p))
    entries.sort(key=lambda e: e[:2])

    def expand(i, matched, flags, out):
        if i == len(entries):
            out.add(tuple(flags))
            return
        _, _, img, p = entries[i]
        eligible = [
            j
            for j, g in enumerate(gt_lists[img])
            if (img, j) not in matched and box_iou(p, g) >= threshold
        ]
        if not eligible:
            expand(i + 1, matched, flags + [False], out)
        else:
            for j in eligible:
                expand(i + 1, matched | {(img, j)}, flags + [True], out)

    out = set()
    expand(0, frozenset(), [], out)
    assert len(out) == 1, f"ambiguous matching: {out}"
    return list(out.pop())


# ---------------------------------------------------------------------------
# mIoU


def test_miou_perfect_and_disjoint():
    a = np.zeros((4, 4), dtype=bool)
    a[:2] = True
    b = ~a
    assert miou([a], [a], ["c"]) == 1.0
    assert miou([a], [b], ["c"]) == 0.0


def test_miou_third_from_pixel_counts():
    pred = np.array([[1, 1], [0, 0]], dtype=bool)
    gt = np.array([[0, 1], [1, 0]], dtype=bool)
    # overlap 1 px, union 3 px
    assert miou([pred], [gt], ["c"]) == pytest.approx(1 / 3)


def test_miou_pools_over_dataset_per_category():
    ones = np.ones((2, 2), dtype=bool)
    zeros = np.zeros((2, 2), dtype=bool)
    # cat a: inter 4, union 8 over two samples -> 0.5; cat b: 1.0
    got = miou_per_category([ones, zeros, ones], [ones, ones, ones], ["a", "a", "b"])
    assert got == {"a": 0.5, "b": 1.0}


def test_miou_skips_empty_union_category():
    zeros = np.zeros((2, 2), dtype=bool)
    ones = np.ones((2, 2), dtype=bool)
    got = miou_per_category([zeros, ones], [zeros, ones], ["empty", "full"])
    assert got == {"full": 1.0}


def test_miou_permutation_invariant():
    rng = np.random.default_rng(0)
    preds = [rng.random((4, 4)) > 0.5 for _ in range(6)]
    gts = [rng.random((4, 4)) > 0.5 for _ in range(6)]
    cats = ["a", "b", "a", "b", "a", "b"]
    base = miou(preds, gts, cats)
    for perm in list(permutations(range(6)))[::120]:
        shuf = miou([preds[i] for i in perm], [gts[i] for i in perm], [cats[i] for i in perm])
        assert shuf == pytest.approx(base)


def test_miou_scale_free_under_upsampling():
    rng = np.random.default_rng(1)
    pred = rng.random((5, 5)) > 0.4
    gt = rng.random((5, 5)) > 0.6
    up = lambda m: np.repeat(np.repeat(m, 3, axis=0), 3, axis=1)
    assert miou([pred], [gt], ["c"]) == pytest.approx(miou([up(pred)], [up(gt)], ["c"]))


def test_miou_resolution_mismatch_rejected():
    with pytest.raises(ValueError):
        miou([np.zeros((2, 2), bool)], [np.zeros((3, 3), bool)], ["c"])


# ---------------------------------------------------------------------------
# mAP@0.5


def _box(x0, y0, w, h, cat="c", conf=1.0):
    return DetectionBox.from_corners(x0, y0, x0 + w, y0 + h, category=cat, confidence=conf)


def test_map_identical_prediction_is_one():
    gt = [_box(2, 2, 8, 8)]
    assert map_at_50([gt], [gt]) == 1.0


def test_map_no_predictions_is_zero():
    gt = [_box(2, 2, 8, 8)]
    assert map_at_50([[]], [gt]) == 0.0


def test_map_hits_at_ranks_one_and_three():
    # 2 GT, 3 predictions, TPs at ranks 1 and 3
    gts = [[_box(0, 0, 10, 10), _box(40, 40, 10, 10)]]
    preds = [[
        _box(0, 0, 10, 10, conf=0.9),
        _box(70, 70, 5, 5, conf=0.8),
        _box(40, 40, 10, 10, conf=0.7),
    ]]
    flags = oracle_flags(preds, gts)
    assert flags == [True, False, True]
    expected = oracle_ap(flags, 2)
    assert expected == Fraction(1, 2) * 1 + Fraction(1, 2) * Fraction(2, 3)
    assert map_at_50(preds, gts) == pytest.approx(float(expected))


def test_map_agrees_with_bruteforce_on_random_instances():
    # well-separated cells keep every pred eligible for at most one GT
    rng = np.random.default_rng(7)
    for _ in range(60):
        n_gt = int(rng.integers(1, 5))
        cells = rng.permutation(16)[:4]
        gts, preds = [], []
        for i in range(n_gt):
            cx, cy = divmod(int(cells[i]), 4)
            gts.append(_box(cx * 30, cy * 30, 12, 12))
        n_pred = int(rng.integers(0, 5))
        for j in range(n_pred):
            conf = float(rng.uniform(0.1, 1.0))
            if j < n_gt and rng.random() < 0.7:  # jittered copy of a GT
                g = gts[j]
                dx, dy = rng.uniform(-2, 2, size=2)
                preds.append(_box(g.x_min + dx, g.y_min + dy, 12, 12, conf=conf))
            else:  # far-off false positive
                preds.append(_box(200 + 20 * j, 200, 12, 12, conf=conf))
        flags = oracle_flags([preds], [gts])
        expected = float(oracle_ap(flags, n_gt))
        assert map_at_50([preds], [gts]) == pytest.approx(expected), (preds, gts)


def test_map_monotone_when_tp_deleted():
    gts = [[_box(0, 0, 10, 10), _box(40, 40, 10, 10)]]
    preds_full = [[
        _box(0, 0, 10, 10, conf=0.9),
        _box(40, 40, 10, 10, conf=0.5),
        _box(70, 70, 5, 5, conf=0.7),
    ]]
    base = map_at_50(preds_full, gts)
    for drop in range(2):  # delete either true positive
        kept = [[b for k, b in enumerate(preds_full[0]) if k != (0 if drop == 0 else 1)]]
        assert map_at_50(kept, gts) <= base + 1e-12


def test_map_mean_over_categories_with_gt():
    gts = [[_box(0, 0, 10, 10, cat="a"), _box(40, 40, 10, 10, cat="b")]]
    preds = [[_box(0, 0, 10, 10, cat="a", conf=0.9)]]  # b missed entirely
    assert map_at_50(preds, gts) == pytest.approx(0.5)
    per = ap_per_category(preds, gts)
    assert per == {"a": 1.0, "b": 0.0}


def test_map_confidence_tie_broken_by_iou():
    gt = [_box(0, 0, 10, 10)]
    near = _box(1, 1, 10, 10, conf=0.5)  # higher IoU
    far = _box(4, 4, 10, 10, conf=0.5)
    # same confidences: the higher-IoU pred must match first either way
    ap_a = map_at_50([[near, far]], [gt])
    ap_b = map_at_50([[far, near]], [gt])
    assert ap_a == ap_b == 1.0


def test_map_permutation_invariant_over_images():
    rng = np.random.default_rng(3)
    gts = [[_box(0, 0, 10, 10)], [_box(40, 40, 10, 10)], [_box(80, 80, 10, 10)]]
    preds = [
        [_box(0, 0, 10, 10, conf=0.9)],
        [_box(100, 0, 5, 5, conf=0.8)],
        [_box(80, 81, 10, 10, conf=0.6)],
    ]
    base = map_at_50(preds, gts)
    for perm in permutations(range(3)):
        got = map_at_50([preds[i] for i in perm], [gts[i] for i in perm])
        assert got == pytest.approx(base)


# ---------------------------------------------------------------------------
# depth


def _dm(arr, valid=None):
    arr = np.asarray(arr, dtype=np.float64)
    valid = np.ones(arr.shape, dtype=bool) if valid is None else valid
    return DepthMap(arr, valid)


def test_depth_perfect_prediction():
    gt = _dm(np.full((3, 3), 4.0))
    out = depth_metrics(gt, gt)
    assert out == {"rmse": 0.0, "a_rel": 0.0, "delta1": 1.0, "delta2": 1.0, "delta3": 1.0}


def test_depth_constant_offset_arithmetic():
    gt = _dm(np.full((2, 2), 2.0))
    pred = _dm(np.full((2, 2), 3.0))
    out = depth_metrics(pred, gt)
    assert out["rmse"] == pytest.approx(1.0)
    assert out["a_rel"] == pytest.approx(0.5)


def test_depth_delta_thresholds():
    gt = _dm(np.full((2, 2), 2.0))
    pred = _dm(np.full((2, 2), 2.6))  # ratio exactly 1.3
    out = depth_metrics(pred, gt)
    assert out["delta1"] == 0.0  # 1.3 >= 1.25
    assert out["delta2"] == 1.0  # 1.3 < 1.5625
    assert out["delta3"] == 1.0


def test_depth_invalid_gt_pixels_excluded():
    gt_vals = np.array([[2.0, 0.0], [2.0, 1e-4]])
    gt = _dm(gt_vals, valid=gt_vals > 0)
    pred = _dm(np.full((2, 2), 2.0))
    out = depth_metrics(pred, gt)  # only the two 2.0 pixels count
    assert out["rmse"] == 0.0
    assert out["delta1"] == 1.0


def test_depth_zero_prediction_fails_deltas():
    gt = _dm(np.full((2, 2), 5.0))
    pred = _dm(np.zeros((2, 2)))
    out = depth_metrics(pred, gt)
    assert out["delta3"] == 0.0
    assert out["a_rel"] == pytest.approx(1.0)


def test_depth_empty_valid_mask_rejected():
    gt = _dm(np.zeros((2, 2)), valid=np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        depth_metrics(_dm(np.ones((2, 2))), gt)


def test_depth_resolution_mismatch_rejected():
    with pytest.raises(ValueError):
        depth_metrics(_dm(np.ones((2, 2))), _dm(np.ones((3, 3))))


# ---------------------------------------------------------------------------
# classification accuracy


def _block(rgb, res=8):
    return np.full((res, res, 3), rgb, dtype=np.uint8)


def test_classification_all_correct_blocks():
    pos, neg = color("green"), color("blue")
    outputs = [_block(pos.rgb), _block(neg.rgb)]
    expected = [(pos, neg, True), (pos, neg, False)]
    assert classification_accuracy(outputs, expected) == 1.0


def test_classification_all_wrong_blocks():
    pos, neg = color("green"), color("blue")
    outputs = [_block(neg.rgb), _block(pos.rgb)]
    expected = [(pos, neg, True), (pos, neg, False)]
    assert classification_accuracy(outputs, expected) == 0.0


def test_classification_noisy_block_still_correct():
    rng = np.random.default_rng(5)
    pos, neg = color("white"), color("black")  # 255 per channel apart
    base = _block(pos.rgb).astype(np.int64)
    noisy = np.clip(base + rng.integers(-20, 21, size=base.shape), 0, 255).astype(np.uint8)
    assert classification_accuracy([noisy], [(pos, neg, True)]) == 1.0


def test_classification_empty_rejected():
    with pytest.raises(ValueError):
        classification_accuracy([], [])
