"""Render task labels as images and read them back.

Every task output in taskpaint is an RGB image. This script encodes one
label per task, decodes it again, and prints the round-trip error.
"""

import numpy as np

from taskpaint.boxes import DetectionBox, box_iou, decode_detection, encode_detection
from taskpaint.codecs import (
    classify,
    decode_depth,
    decode_segmentation,
    encode_classification,
    encode_depth,
    encode_segmentation,
)
from taskpaint.palette import color

RES = 64

# segmentation: binary mask <-> black/white image
mask = np.zeros((RES, RES), dtype=bool)
mask[20:44, 12:40] = True
img = encode_segmentation(mask)
back = decode_segmentation(img)
print(f"segmentation: {mask.sum()} foreground px, round-trip exact: {np.array_equal(mask, back)}")

# detection: boxes <-> red outlines
box = DetectionBox(cx=32, cy=30, w=28, h=20)
scene = np.full((RES, RES, 3), 70, dtype=np.uint8)
painted = encode_detection(scene, [box])
recovered = decode_detection(painted)
print(f"detection: recovered {len(recovered)} box(es), IoU {box_iou(box, recovered[0]):.3f}, "
      f"confidence {recovered[0].confidence:.3f}")

# depth: meters <-> gray intensity, quantized to 10/255 m steps
depth = np.linspace(0.0, 10.0, RES * RES).reshape(RES, RES)
dimg = encode_depth(depth)
dback = decode_depth(dimg)
err = np.abs(dback.values - depth).max()
print(f"depth: max round-trip error {err:.4f} m (quantization bound {10/255:.4f})")

# classification: answer <-> solid color block
pos, neg = color("yellow"), color("blue")
yes = encode_classification(True, pos, neg, RES)
no = encode_classification(False, pos, neg, RES)
print(f"classification: present block reads {classify(yes, pos, neg)}, "
      f"absent block reads {classify(no, pos, neg)}")
