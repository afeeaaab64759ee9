import json
import logging

import numpy as np
import pytest

from taskpaint.augment import augment
from taskpaint.boxes import DetectionBox, decode_detection
from taskpaint.codecs import decode_depth, decode_segmentation
from taskpaint.manifest import (
    Manifest,
    TaskSample,
    build_manifest,
    header_path,
    split_assign,
)
from taskpaint.prompts import FIXED_TEMPLATES, render_fixed
from taskpaint.sources import SourceSpec, ingest
from taskpaint.synthetic import (
    CATEGORIES,
    Shape,
    make_synthetic_sources,
    shape_mask,
    write_segmentation_source,
)
from taskpaint.utils import save_png


# ---------------------------------------------------------------------------
# fixtures


def _coco_fixture(root):
    """2 images, 3 annotations over 2 categories."""
    (root / "images").mkdir(parents=True)
    for name in ("a.png", "b.png"):
        save_png(root / "images" / name, np.zeros((32, 32, 3), dtype=np.uint8))
    doc = {
        "images": [
            {"id": 1, "file_name": "a.png", "width": 32, "height": 32},
            {"id": 2, "file_name": "b.png", "width": 32, "height": 32},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [2, 2, 8, 8]},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [14, 14, 10, 6]},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [5, 5, 12, 12]},
        ],
        "categories": [{"id": 1, "name": "circle"}, {"id": 2, "name": "square"}],
    }
    (root / "annotations.json").write_text(json.dumps(doc))


def test_source_spec_rejects_bad_combo():
    with pytest.raises(ValueError):
        SourceSpec(task_id="depth", format="coco_json", root="/tmp/x")


def test_coco_ingest_enumerates_image_category_pairs(tmp_path):
    _coco_fixture(tmp_path)
    spec = SourceSpec(task_id="detection", format="coco_json", root=str(tmp_path))
    records = ingest(spec)
    # brute force: (a, circle), (a, square), (b, circle)
    pairs = {(r.image_id, r.label["category"]) for r in records}
    assert pairs == {("a", "circle"), ("a", "square"), ("b", "circle")}
    by_pair = {(r.image_id, r.label["category"]): r.label["boxes"] for r in records}
    assert by_pair[("a", "circle")] == [[6.0, 6.0, 8.0, 8.0]]  # center-based


def test_coco_ingest_skips_unparseable_annotations(tmp_path, caplog):
    _coco_fixture(tmp_path)
    doc = json.loads((tmp_path / "annotations.json").read_text())
    doc["annotations"].append({"id": 9, "image_id": 1, "category_id": 1, "bbox": [1, 1, 0, 5]})
    doc["annotations"].append({"id": 10, "image_id": 1})  # no bbox at all
    (tmp_path / "annotations.json").write_text(json.dumps(doc))
    spec = SourceSpec(task_id="detection", format="coco_json", root=str(tmp_path))
    with caplog.at_level(logging.WARNING):
        records = ingest(spec)
    assert len(records) == 3
    assert "skipped 2" in caplog.text


def test_empty_annotation_file_warns(tmp_path, caplog):
    (tmp_path / "images").mkdir(parents=True)
    (tmp_path / "annotations.json").write_text(
        json.dumps({"images": [], "annotations": [], "categories": []})
    )
    spec = SourceSpec(task_id="detection", format="coco_json", root=str(tmp_path))
    with caplog.at_level(logging.WARNING):
        assert ingest(spec) == []
    assert "produced no records" in caplog.text


def test_missing_image_is_hard_error(tmp_path):
    _coco_fixture(tmp_path)
    (tmp_path / "images" / "a.png").unlink()
    spec = SourceSpec(task_id="detection", format="coco_json", root=str(tmp_path))
    with pytest.raises(FileNotFoundError):
        ingest(spec)


def test_depth_dir_ingest_counts(tmp_path):
    (tmp_path / "images").mkdir(parents=True)
    (tmp_path / "depth").mkdir()
    for i in range(4):
        save_png(tmp_path / "images" / f"d{i}.png", np.zeros((16, 16, 3), dtype=np.uint8))
        save_png(tmp_path / "depth" / f"d{i}.png", np.full((16, 16), 5000, dtype=np.uint16))
    spec = SourceSpec(task_id="depth", format="depth_png_dir", root=str(tmp_path))
    records = ingest(spec)
    assert len(records) == 4
    assert all(r.task_id == "depth" for r in records)


def test_folder_labels_ingest(tmp_path):
    for cat in ("circle", "square"):
        (tmp_path / cat).mkdir(parents=True)
        save_png(tmp_path / cat / "x.png", np.zeros((16, 16, 3), dtype=np.uint8))
    spec = SourceSpec(task_id="classification", format="folder_labels", root=str(tmp_path))
    records = ingest(spec)
    assert {r.label["category"] for r in records} == {"circle", "square"}
    assert all(r.label["all_categories"] == ["circle", "square"] for r in records)


# ---------------------------------------------------------------------------
# synthetic corpus


def test_synthetic_sources_ingest_with_expected_counts(tmp_path):
    counts = {"segmentation": 6, "detection": 5, "depth": 4, "classification": 3}
    specs = make_synthetic_sources(tmp_path, seed=3, counts=counts, resolution=32)
    got = {s.task_id: len(ingest(s)) for s in specs}
    assert got == counts


def test_synthetic_corpus_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    write_segmentation_source(a, 3, seed=11, resolution=32)
    write_segmentation_source(b, 3, seed=11, resolution=32)
    fa = (a / "images" / "im-00001.png").read_bytes()
    fb = (b / "images" / "im-00001.png").read_bytes()
    assert fa == fb


def test_shape_masks_stay_inside_box():
    for cat in CATEGORIES:
        mask = shape_mask(Shape(cat, 5, 7, 10, 12), 32)
        ys, xs = np.nonzero(mask)
        assert xs.min() >= 5 and xs.max() <= 14
        assert ys.min() >= 7 and ys.max() <= 18
        assert mask.sum() > 0


def test_square_mask_fills_exact_box():
    mask = shape_mask(Shape("square", 3, 4, 5, 6), 16)
    expected = np.zeros((16, 16), dtype=bool)
    expected[4:10, 3:8] = True
    assert np.array_equal(mask, expected)


# ---------------------------------------------------------------------------
# manifest build


@pytest.fixture(scope="module")
def small_build(tmp_path_factory):
    root = tmp_path_factory.mktemp("srcs")
    counts = {"segmentation": 3, "detection": 3, "depth": 2, "classification": 2}
    specs = make_synthetic_sources(root, seed=5, counts=counts, resolution=32)
    out = tmp_path_factory.mktemp("ds")
    manifest = build_manifest(specs, mode="fp", seed=21, out_dir=out, resolution=32)
    return specs, manifest, out


def test_build_counts_negatives_double_classification(small_build):
    _, manifest, _ = small_build
    by_task = {}
    for r in manifest.records:
        by_task[r.task_id] = by_task.get(r.task_id, 0) + 1
    assert by_task == {"segmentation": 3, "detection": 3, "depth": 2, "classification": 4}
    negs = [r for r in manifest.records if r.task_id == "classification" and not r.raw_label["present"]]
    assert len(negs) == 2


def test_fp_mode_instructions_match_fixed_templates(small_build):
    _, manifest, _ = small_build
    for r in manifest.records:
        cat = r.raw_label.get("category")
        colors = None
        if r.task_id == "classification":
            colors = (r.raw_label["color_pos"], r.raw_label["color_neg"])
        if r.task_id == "depth":
            cat = None
        assert r.instruction.text == render_fixed(r.task_id, cat, colors).text


def test_negative_pairs_never_name_present_category(small_build):
    specs, manifest, _ = small_build
    positives = {}
    for r in manifest.records:
        if r.task_id == "classification" and r.raw_label["present"]:
            positives[r.meta["image_id"]] = r.raw_label["category"]
    for r in manifest.records:
        if r.task_id == "classification" and not r.raw_label["present"]:
            assert r.raw_label["category"] != positives[r.meta["image_id"]]


def test_targets_decode_back_to_labels(small_build):
    _, manifest, _ = small_build
    from taskpaint.utils import load_png_rgb

    for r in manifest.records:
        target = load_png_rgb(manifest.resolve(r.target_path))
        if r.task_id == "detection":
            got = decode_detection(target, category=r.raw_label["category"])
            assert len(got) == len(r.raw_label["boxes"])
        elif r.task_id == "segmentation":
            assert decode_segmentation(target).sum() > 0
        elif r.task_id == "depth":
            vals = decode_depth(target).values
            assert vals.max() <= 10.0


def test_manifest_roundtrip_and_header(small_build, tmp_path):
    _, manifest, out = small_build
    path = out / "m.jsonl"
    manifest.save(path)
    assert header_path(path).name == "m.header.json"
    loaded = Manifest.load(path)
    assert loaded.mode == manifest.mode
    assert loaded.seed == manifest.seed
    assert loaded.resolution == manifest.resolution
    assert loaded.codec == manifest.codec
    assert [r.to_json() for r in loaded.records] == [r.to_json() for r in manifest.records]


def test_build_is_deterministic(tmp_path):
    srcs = tmp_path / "s"
    counts = {"segmentation": 2, "classification": 2}
    specs = make_synthetic_sources(srcs, seed=5, counts=counts, resolution=32)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    ma = build_manifest(specs, mode="rp", seed=9, out_dir=out_a, resolution=32)
    mb = build_manifest(specs, mode="rp", seed=9, out_dir=out_b, resolution=32)
    ma.save(out_a / "m.jsonl")
    mb.save(out_b / "m.jsonl")
    assert (out_a / "m.jsonl").read_bytes() == (out_b / "m.jsonl").read_bytes()
    assert (out_a / "m.header.json").read_bytes() == (out_b / "m.header.json").read_bytes()
    rec = ma.records[0]
    assert (out_a / rec.input_path).read_bytes() == (out_b / rec.input_path).read_bytes()
    assert (out_a / rec.target_path).read_bytes() == (out_b / rec.target_path).read_bytes()


def test_rp_mode_varies_phrasings(tmp_path):
    srcs = tmp_path / "s"
    specs = make_synthetic_sources(srcs, seed=5, counts={"segmentation": 12}, resolution=32)
    m = build_manifest(specs, mode="rp", seed=3, out_dir=tmp_path / "d", resolution=32)
    texts = {r.instruction.text.replace(r.raw_label["category"], "%category%") for r in m.records}
    assert len(texts) > 1  # 12 seeded draws from an 8-entry bank


# ---------------------------------------------------------------------------
# split assignment


def _manifest_with_ids(n):
    records = []
    for i in range(n):
        records.append(
            TaskSample(
                input_path=f"data/x{i}-in.png",
                target_path=f"data/x{i}-tgt.png",
                instruction=render_fixed("depth"),
                task_id="depth",
                raw_label={},
                meta={"image_id": f"img{i}"},
            )
        )
    return Manifest(records=records, mode="fp", seed=0, resolution=32)


def test_ratio_split_exact_counts():
    m = split_assign(_manifest_with_ids(100), {"kind": "ratio", "ratios": [0.8, 0.1, 0.1], "seed": 4})
    counts = {s: sum(1 for r in m.records if r.split == s) for s in ("train", "val", "test")}
    assert counts == {"train": 80, "val": 10, "test": 10}


def test_ratio_split_seed_changes_assignment_not_counts():
    base = _manifest_with_ids(50)
    a = split_assign(base, {"kind": "ratio", "ratios": [0.8, 0.1, 0.1], "seed": 1})
    b = split_assign(base, {"kind": "ratio", "ratios": [0.8, 0.1, 0.1], "seed": 2})
    counts = lambda m: {s: sum(1 for r in m.records if r.split == s) for s in ("train", "val", "test")}
    assert counts(a) == counts(b)
    assert [r.split for r in a.records] != [r.split for r in b.records]


def test_ratio_split_keeps_image_records_together():
    records = []
    for i in range(30):
        for sub in range(2):  # two records per image
            records.append(
                TaskSample(
                    input_path=f"data/x{i}-{sub}-in.png",
                    target_path=f"data/x{i}-{sub}-tgt.png",
                    instruction=render_fixed("depth"),
                    task_id="depth",
                    raw_label={},
                    meta={"image_id": f"img{i}"},
                )
            )
    m = Manifest(records=records, mode="fp", seed=0, resolution=32)
    out = split_assign(m, {"kind": "ratio", "ratios": [0.5, 0.25, 0.25], "seed": 7})
    by_id = {}
    for r in out.records:
        by_id.setdefault(r.meta["image_id"], set()).add(r.split)
    assert all(len(s) == 1 for s in by_id.values())


def test_bad_ratios_rejected():
    with pytest.raises(ValueError):
        split_assign(_manifest_with_ids(10), {"kind": "ratio", "ratios": [0.5, 0.2, 0.2], "seed": 0})


def test_source_split_copied_verbatim(tmp_path):
    (tmp_path / "images").mkdir(parents=True)
    (tmp_path / "depth").mkdir()
    for i in range(3):
        save_png(tmp_path / "images" / f"d{i}.png", np.zeros((16, 16, 3), dtype=np.uint8))
        save_png(tmp_path / "depth" / f"d{i}.png", np.full((16, 16), 4000, dtype=np.uint16))
    spec = SourceSpec(
        task_id="depth",
        format="depth_png_dir",
        root=str(tmp_path),
        splits={"train": ["d0"], "val": ["d1"], "test": ["d2"]},
    )
    m = build_manifest([spec], mode="fp", seed=0, out_dir=tmp_path / "out", resolution=16)
    m = split_assign(m, {"kind": "source"})
    got = {r.meta["image_id"]: r.split for r in m.records}
    assert got == {"d0": "train", "d1": "val", "d2": "test"}


# ---------------------------------------------------------------------------
# augmentation


class _ForcedRng:
    """Stub generator yielding scripted draws (flip, side, dx, dy order)."""

    def __init__(self, uniform, ints):
        self.uniform = uniform
        self.ints = list(ints)

    def random(self):
        return self.uniform

    def integers(self, lo, hi):
        forced = self.ints.pop(0)
        assert lo <= forced < hi, (lo, forced, hi)
        return forced


def _seg_pair(res=32):
    x = np.full((res, res, 3), 40, dtype=np.uint8)
    x[8:20, 4:16] = (0, 200, 0)
    vy = np.zeros((res, res, 3), dtype=np.uint8)
    vy[8:20, 4:16] = 255
    return x, vy


def test_identity_augment_returns_inputs_exactly():
    x, vy = _seg_pair()
    rng = _ForcedRng(0.9, [32, 0, 0])  # no flip, s = R, corner crop
    x2, vy2, _ = augment(x, vy, rng, task_id="segmentation")
    assert np.array_equal(x2, x)
    assert np.array_equal(vy2, vy)


def test_flip_only_keeps_masks_aligned():
    x, vy = _seg_pair()
    rng = _ForcedRng(0.1, [32, 0, 0])  # flip, no resize, corner crop
    x2, vy2, _ = augment(x, vy, rng, task_id="segmentation")
    assert np.array_equal(x2, x[:, ::-1])
    assert np.array_equal(vy2, vy[:, ::-1])
    # foreground in the input maps to foreground in the target
    green = (x2[:, :, 1] == 200)
    mask = decode_segmentation(vy2)
    assert np.array_equal(green, mask)


def test_random_augment_keeps_pairs_aligned():
    x, vy = _seg_pair(48)
    rng = np.random.default_rng(123)
    for _ in range(20):
        x2, vy2, _ = augment(x, vy, rng, task_id="segmentation")
        assert x2.shape == x.shape
        green = x2[:, :, 1] > 150
        mask = decode_segmentation(vy2)
        # bilinear edges may disagree by a thin boundary band
        disagree = np.sum(green ^ mask)
        assert disagree <= 0.05 * mask.size


def test_detection_augment_reencodes_boxes():
    res = 64
    x = np.full((res, res, 3), 30, dtype=np.uint8)
    x[20:36, 12:28] = (0, 0, 255)
    box = DetectionBox.from_pixel_rect(12, 20, 16, 16, category="square")
    from taskpaint.boxes import encode_detection

    vy = encode_detection(x, [box])
    label = {"category": "square", "boxes": [[box.cx, box.cy, box.w, box.h]]}
    rng = _ForcedRng(0.1, [res, 0, 0])  # flip only
    x2, vy2, label2 = augment(x, vy, rng, task_id="detection", label=label)
    got = decode_detection(vy2, category="square")
    assert len(got) == 1
    (cx, cy, w, h), = label2["boxes"]
    assert (cx, cy, w, h) == (res - box.cx, box.cy, box.w, box.h)
    # decoded box matches the transformed label exactly
    assert got[0].cx == pytest.approx(cx)
    assert got[0].w == pytest.approx(w)


def test_fully_cropped_box_drops_sample():
    res = 64
    x = np.full((res, res, 3), 30, dtype=np.uint8)
    box = DetectionBox.from_pixel_rect(0, 0, 4, 4, category="square")
    from taskpaint.boxes import encode_detection

    vy = encode_detection(x, [box])
    label = {"category": "square", "boxes": [[box.cx, box.cy, box.w, box.h]]}
    side = int(1.125 * res)
    rng = _ForcedRng(0.9, [side, side - res, side - res])
    assert augment(x, vy, rng, task_id="detection", label=label) is None


def test_augment_rejects_mismatched_shapes():
    x = np.zeros((16, 16, 3), dtype=np.uint8)
    vy = np.zeros((17, 17, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        augment(x, vy, np.random.default_rng(0))
