"""Versioned checkpoint container: named tensors plus a JSON meta block.

Layout: magic, little-endian header length, canonical JSON header, then raw
array bytes in header order. Identical contents always produce identical
bytes, so checkpoints can be fingerprinted and diffed reliably (archive
formats with embedded timestamps cannot).
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .denoiser import Denoiser, DenoiserConfig
from .latents import LatentCodec
from .schedule import NoiseSchedule, make_schedule
from .utils import canonical_json

MAGIC = b"TPCKPT01"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        entries.append(
            {
                "name": name,
                "dtype": dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": int(arr.nbytes),
            }
        )
        offset += arr.nbytes
    header = canonical_json({"version": 1, "arrays": entries, "meta": meta}).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            for name in names:
                arr = np.ascontiguousarray(arrays[name]).astype(arrays[name].dtype.newbyteorder("<"))
                fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        blob = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        arrays[entry["name"]] = arr
    return arrays, header["meta"]


def save_model(
    path,
    model: Denoiser,
    ema_params: dict[str, np.ndarray] | None,
    schedule_cfg: dict,
    codec: LatentCodec,
    meta: dict | None = None,
) -> None:
    arrays = {f"param.{k}": v for k, v in model.store.params.items()}
    if ema_params is not None:
        arrays.update({f"ema.{k}": v for k, v in ema_params.items()})
    full_meta = {
        "denoiser": model.config.to_json(),
        "schedule": schedule_cfg,
        "codec": {"patch": codec.patch},
        "has_ema": ema_params is not None,
    }
    if meta:
        full_meta.update(meta)
    save_arrays(path, arrays, full_meta)


def load_model(path, use_ema: bool = True) -> tuple[Denoiser, NoiseSchedule, LatentCodec, dict]:
    arrays, meta = load_arrays(path)
    config = DenoiserConfig.from_json(meta["denoiser"])
    model = Denoiser(config)
    prefix = "ema." if use_ema and meta.get("has_ema") else "param."
    values = {k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)}
    model.store.load_values({k: v.astype(model.dtype) for k, v in values.items()})
    sched = meta["schedule"]
    schedule = make_schedule(sched["T"], sched["beta_start"], sched["beta_end"])
    codec = LatentCodec(patch=meta["codec"]["patch"])
    return model, schedule, codec, meta
