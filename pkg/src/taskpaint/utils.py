"""Shared plumbing: stable hashing, canonical JSON, atomic file writes, PNG I/O."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def canonical_json(obj) -> str:
    """Serialize with sorted keys and no whitespace so equal objects give equal bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(obj) -> str:
    """Short stable hex digest of a JSON-serializable object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def stable_bucket(token: str, n_buckets: int) -> int:
    """Hash a string token into [0, n_buckets). Stable across processes and runs."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename, so failures
    never leave a partial file behind."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Save an (H, W, 3) uint8 RGB image or an (H, W) uint8/uint16 grayscale image."""
    img = np.asarray(img)
    if img.ndim == 3:
        pil = Image.fromarray(img.astype(np.uint8), mode="RGB")
    elif img.dtype == np.uint16:
        pil = Image.fromarray(img)
    else:
        pil = Image.fromarray(img.astype(np.uint8), mode="L")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        pil.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_png_rgb(path: str | Path) -> np.ndarray:
    """Load a PNG as (H, W, 3) uint8 RGB."""
    with Image.open(path) as pil:
        return np.asarray(pil.convert("RGB"), dtype=np.uint8)


def load_png_gray16(path: str | Path) -> np.ndarray:
    """Load a 16-bit grayscale PNG as (H, W) uint16."""
    with Image.open(path) as pil:
        arr = np.asarray(pil)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel depth PNG, got shape {arr.shape}")
    return arr.astype(np.uint16)
