import numpy as np
import pytest

from taskpaint.boxes import (
    DetectionBox,
    box_iou,
    decode_detection,
    encode_detection,
    pixel_extents,
)
from taskpaint.codecs import stroke_width


def _ring_mask(shape, box, stroke):
    # independent oracle: filled rectangle minus its interior, per ring offset
    x0, y0, pw, ph = pixel_extents(box)
    m = np.zeros(shape[:2], dtype=bool)
    for d in range(-(stroke // 2), stroke - stroke // 2):
        xa, ya = x0 - d, y0 - d
        xb, yb = x0 + pw - 1 + d, y0 + ph - 1 + d
        if xb < xa or yb < ya:
            continue
        filled = np.zeros_like(m)
        filled[max(ya, 0) : yb + 1, max(xa, 0) : xb + 1] = True
        if yb - 1 >= ya + 1 and xb - 1 >= xa + 1:
            filled[ya + 1 : yb, xa + 1 : xb] = False
        m |= filled
    return m


def test_box_validation():
    with pytest.raises(ValueError):
        DetectionBox(cx=5, cy=5, w=0, h=3)
    with pytest.raises(ValueError):
        DetectionBox(cx=5, cy=5, w=3, h=3, confidence=1.5)


def test_box_json_roundtrip():
    box = DetectionBox(cx=10.5, cy=20.0, w=8.0, h=6.0, category="circle", confidence=0.75)
    assert DetectionBox.from_json(box.to_json()) == box


def test_box_iou_cases():
    a = DetectionBox.from_corners(0, 0, 2, 2)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, DetectionBox.from_corners(5, 5, 7, 7)) == 0.0
    # 1x2 overlap of two 2x2 boxes: 2 / (4 + 4 - 2)
    b = DetectionBox.from_corners(1, 0, 3, 2)
    assert box_iou(a, b) == pytest.approx(1 / 3)


def test_pixel_rect_constructor_roundtrip():
    box = DetectionBox.from_pixel_rect(5, 7, 10, 12)
    assert pixel_extents(box) == (5, 7, 10, 12)


def test_encode_empty_box_list_is_identity():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(64, 64, 3)).astype(np.uint8)
    assert np.array_equal(encode_detection(img, []), img)


def test_encode_one_box_pixel_diff_oracle():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 200, size=(256, 256, 3)).astype(np.uint8)
    box = DetectionBox.from_pixel_rect(40, 60, 50, 30)
    out = encode_detection(img, [box])
    expected = _ring_mask(img.shape, box, stroke_width(256))
    changed = (out != img).any(axis=2)
    # the drawn region is exactly the ring; drawn pixels are pure red
    assert (out[expected] == (255, 0, 0)).all()
    assert not changed[~expected].any()


def test_encode_two_overlapping_boxes_union():
    img = np.zeros((128, 128, 3), dtype=np.uint8)
    b1 = DetectionBox.from_pixel_rect(10, 10, 40, 40)
    b2 = DetectionBox.from_pixel_rect(30, 30, 40, 40)
    out = encode_detection(img, [b1, b2])
    s = stroke_width(128)
    expected = _ring_mask(img.shape, b1, s) | _ring_mask(img.shape, b2, s)
    assert np.array_equal((out == (255, 0, 0)).all(axis=2) & expected, expected)
    assert not (out != img).any(axis=2)[~expected].any()


def test_encode_out_of_bounds_rejected():
    img = np.zeros((32, 32, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        encode_detection(img, [DetectionBox(cx=30, cy=16, w=8, h=8)])


def test_decode_all_black_is_empty():
    assert decode_detection(np.zeros((64, 64, 3), dtype=np.uint8)) == []


def test_roundtrip_noise_free_64():
    img = np.full((64, 64, 3), 30, dtype=np.uint8)
    box = DetectionBox.from_pixel_rect(12, 20, 24, 16, category="square")
    out = encode_detection(img, [box])
    found = decode_detection(out, category="square")
    assert len(found) == 1
    assert box_iou(found[0], box) >= 0.95
    assert found[0].category == "square"


def test_roundtrip_noise_free_256_two_boxes():
    img = np.full((256, 256, 3), 50, dtype=np.uint8)
    boxes = [
        DetectionBox.from_pixel_rect(30, 40, 60, 50),
        DetectionBox.from_pixel_rect(150, 120, 70, 90),
    ]
    out = encode_detection(img, boxes)
    found = decode_detection(out)
    assert len(found) == 2
    for truth in boxes:
        assert max(box_iou(truth, f) for f in found) >= 0.95


def test_roundtrip_under_gaussian_noise():
    rng = np.random.default_rng(42)
    img = np.full((64, 64, 3), 40, dtype=np.uint8)
    box = DetectionBox.from_pixel_rect(16, 16, 28, 24)
    clean = encode_detection(img, [box]).astype(np.float64)
    noisy = np.clip(clean + rng.normal(0, 8, size=clean.shape), 0, 255).astype(np.uint8)
    found = decode_detection(noisy)
    assert len(found) >= 1
    assert max(box_iou(f, box) for f in found) >= 0.8


def test_decode_rejects_non_rectangular_red():
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    # red diagonal stripe: bright red but nothing like a box outline
    for i in range(10, 50):
        img[i, i] = (255, 0, 0)
        img[i, i + 1] = (255, 0, 0)
    assert decode_detection(img) == []


def test_decode_ignores_non_red_shapes():
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[10:40, 10:40] = (0, 255, 0)  # green filled square
    box = DetectionBox.from_pixel_rect(44, 44, 16, 12)
    out = encode_detection(img, [box])
    found = decode_detection(out)
    assert len(found) == 1
    assert box_iou(found[0], box) >= 0.95


def test_reference_filter_keeps_only_matches():
    img = np.full((128, 128, 3), 20, dtype=np.uint8)
    keep = DetectionBox.from_pixel_rect(10, 10, 30, 30)
    drop = DetectionBox.from_pixel_rect(70, 70, 30, 30)
    out = encode_detection(img, [keep, drop])
    found = decode_detection(out, reference=[keep])
    assert len(found) == 1
    assert box_iou(found[0], keep) >= 0.95


def test_decode_confidence_in_unit_interval():
    img = np.full((64, 64, 3), 10, dtype=np.uint8)
    out = encode_detection(img, [DetectionBox.from_pixel_rect(8, 8, 20, 20)])
    for box in decode_detection(out):
        assert 0.0 <= box.confidence <= 1.0


def test_clamped_box():
    box = DetectionBox(cx=2, cy=2, w=8, h=8)
    clamped = box.clamped(32, 32)
    assert clamped.x_min == 0.0 and clamped.y_min == 0.0
    assert clamped.x_max == 6.0
    with pytest.raises(ValueError):
        DetectionBox(cx=-10, cy=-10, w=2, h=2).clamped(32, 32)
