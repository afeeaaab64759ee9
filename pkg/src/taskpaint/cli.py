"""Command-line entry point.

Subcommands: build-dataset, train, infer, eval, guidance-grid,
fetch-paraphrases.  Option values resolve with precedence CLI flag >
--config JSON file > TASKPAINT_* environment variable > built-in default,
and the fully resolved configuration is written next to every artifact as
<artifact>.run.json so outputs are reproducible from disk alone.

Exit codes: 0 success, 1 user error (bad flags, missing files, invalid
values), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import DropoutConfig, GuidanceConfig
from .denoiser import Denoiser, DenoiserConfig
from .latents import LatentCodec
from .manifest import Manifest, build_manifest, split_assign
from .prompts import (
    TASKS,
    ParaphraseBank,
    ParaphraserConfig,
    fetch_paraphrases,
)
from .schedule import make_schedule
from .sources import SourceSpec
from .training import TrainConfig, TrainingDiverged, TrainItem, train_model
from .utils import atomic_write_text, canonical_json, fingerprint, load_png_rgb, save_png

log = logging.getLogger(__name__)

ENV_PREFIX = "TASKPAINT_"


class UserError(Exception):
    """Anything the user can fix by changing inputs or flags."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for internal faults
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(_fail(f"error: {message}", code=1))


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if str(v).strip() != ""]


@dataclass(frozen=True)
class RunConfig:
    """Resolved options for one subcommand invocation."""

    subcommand: str
    options: dict

    def fingerprint(self) -> str:
        return fingerprint({"subcommand": self.subcommand, "options": self.options})

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "options": self.options,
            "fingerprint": self.fingerprint(),
        }

    def write_next_to(self, artifact: str | Path) -> None:
        artifact = Path(artifact)
        run_path = artifact.with_name(artifact.name + ".run.json")
        atomic_write_text(run_path, canonical_json(self.to_json()) + "\n")


def _resolve(subcommand: str, args: argparse.Namespace, spec: dict[str, dict]) -> RunConfig:
    """Fold defaults, environment, config file, and flags into one dict."""
    config_file = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                config_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise UserError(f"cannot read config file {cfg_path}: {err}")
        if not isinstance(config_file, dict):
            raise UserError(f"config file {cfg_path} must hold a JSON object")

    options = {}
    for name, meta in spec.items():
        parse = meta.get("parse", lambda v: v)
        value = meta.get("default")
        env_key = ENV_PREFIX + name.upper()
        if env_key in os.environ:
            value = parse(os.environ[env_key])
        if name in config_file:
            value = parse(config_file[name])
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            value = parse(flag_value)
        if value is None and meta.get("required"):
            raise UserError(f"missing required option --{name.replace('_', '-')}")
        options[name] = value
    return RunConfig(subcommand=subcommand, options=options)


# ---------------------------------------------------------------------------
# build-dataset


BUILD_SPEC = {
    "sources": {"required": True},
    "mode": {"default": "fp", "parse": lambda v: str(v).lower()},
    "seed": {"default": 0, "parse": int},
    "out": {"required": True},
    "resolution": {"default": 64, "parse": int},
    "split": {"default": "ratio"},
    "split_ratios": {"default": [0.8, 0.1, 0.1], "parse": _floats},
    "split_seed": {"default": 0, "parse": int},
    "bank": {"default": None},
}


def _load_sources(path: str) -> list[SourceSpec]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UserError(f"cannot read sources file {path}: {err}")
    entries = doc["sources"] if isinstance(doc, dict) else doc
    try:
        return [SourceSpec.from_json(e) for e in entries]
    except (KeyError, TypeError, ValueError) as err:
        raise UserError(f"bad source entry in {path}: {err}")


def cmd_build_dataset(cfg: RunConfig) -> int:
    o = cfg.options
    sources = _load_sources(o["sources"])
    bank = ParaphraseBank.load(o["bank"]) if o["bank"] else None
    out = Path(o["out"])
    try:
        manifest = build_manifest(
            sources,
            mode=o["mode"],
            seed=o["seed"],
            out_dir=out.parent,
            resolution=o["resolution"],
            bank=bank,
        )
    except FileNotFoundError as err:
        raise UserError(str(err))
    if o["split"] == "ratio":
        policy = {"kind": "ratio", "ratios": o["split_ratios"], "seed": o["split_seed"]}
    elif o["split"] == "source":
        policy = {"kind": "source"}
    else:
        raise UserError(f"unknown split policy {o['split']!r}")
    manifest = split_assign(manifest, policy)
    manifest.save(out)
    cfg.write_next_to(out)
    print(f"wrote {len(manifest.records)} records to {out}")
    return 0


# ---------------------------------------------------------------------------
# train


TRAIN_SPEC = {
    "manifest": {"required": True},
    "steps": {"default": 2000, "parse": int},
    "seed": {"default": 0, "parse": int},
    "out": {"required": True},
    "split": {"default": "train"},
    "batch_size": {"default": 16, "parse": int},
    "lr": {"default": 1e-4, "parse": float},
    "width": {"default": 32, "parse": int},
    "t_steps": {"default": 1000, "parse": int},
    "beta_start": {"default": 1e-4, "parse": float},
    "beta_end": {"default": 0.02, "parse": float},
    "ema_decay": {"default": 0.999, "parse": float},
    "dropout": {"default": [0.05, 0.05, 0.05], "parse": _floats},
    "augment": {"default": 0, "parse": int},
}


def _load_items(manifest: Manifest, split: str, n_augment: int, seed: int) -> list[TrainItem]:
    from .augment import augment as run_augment

    records = manifest.split_records(split)
    if not records:
        raise UserError(f"manifest split {split!r} is empty")
    items = []
    for idx, rec in enumerate(records):
        x = load_png_rgb(manifest.resolve(rec.input_path))
        vy = load_png_rgb(manifest.resolve(rec.target_path))
        items.append(TrainItem(input_img=x, target_img=vy, text=rec.instruction.text))
        for k in range(n_augment):
            rng = np.random.default_rng([seed, idx, k])
            got = run_augment(x, vy, rng, task_id=rec.task_id, label=rec.raw_label)
            if got is not None:
                items.append(TrainItem(input_img=got[0], target_img=got[1], text=rec.instruction.text))
    return items


def cmd_train(cfg: RunConfig) -> int:
    o = cfg.options
    try:
        manifest = Manifest.load(o["manifest"])
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise UserError(f"cannot load manifest {o['manifest']}: {err}")
    items = _load_items(manifest, o["split"], o["augment"], o["seed"])
    dropout = o["dropout"]
    if len(dropout) != 3:
        raise UserError("--dropout needs three comma-separated probabilities")
    model = Denoiser(DenoiserConfig(width=o["width"], seed=o["seed"]))
    schedule_cfg = {"T": o["t_steps"], "beta_start": o["beta_start"], "beta_end": o["beta_end"]}
    schedule = make_schedule(**schedule_cfg)
    codec = LatentCodec()
    train_cfg = TrainConfig(
        steps=o["steps"],
        batch_size=o["batch_size"],
        lr=o["lr"],
        ema_decay=o["ema_decay"],
        seed=o["seed"],
        dropout=DropoutConfig(*dropout),
    )
    result = train_model(model, schedule, codec, items, train_cfg)
    from .checkpoint import save_model

    out = Path(o["out"])
    save_model(
        out,
        model,
        result.ema_params,
        schedule_cfg,
        codec,
        meta={"train": train_cfg.to_json(), "manifest_header": manifest.header()},
    )
    result.write_loss_csv(out.with_name(out.name + ".loss.csv"))
    cfg.write_next_to(out)
    print(f"trained {result.steps} steps, final loss {result.final_loss:.4f}, saved {out}")
    return 0


# ---------------------------------------------------------------------------
# infer


INFER_SPEC = {
    "ckpt": {"required": True},
    "image": {"required": True},
    "instruction": {"required": True},
    "gi": {"default": 1.5, "parse": float},
    "gt": {"default": 7.5, "parse": float},
    "steps": {"default": 100, "parse": int},
    "seed": {"default": 0, "parse": int},
    "out": {"required": True},
}


def _load_ckpt(path: str):
    from .checkpoint import load_model

    try:
        return load_model(path)
    except (OSError, ValueError, KeyError) as err:
        raise UserError(f"cannot load checkpoint {path}: {err}")


def _sample_one(model, schedule, codec, image, text, g, steps, rng):
    from .sampler import sample_euler_ancestral

    return sample_euler_ancestral(model, schedule, codec, image, text, g, steps, rng=rng)


def cmd_infer(cfg: RunConfig) -> int:
    o = cfg.options
    model, schedule, codec, _ = _load_ckpt(o["ckpt"])
    try:
        image = load_png_rgb(o["image"])
    except OSError as err:
        raise UserError(f"cannot read image {o['image']}: {err}")
    g = GuidanceConfig(gamma_i=o["gi"], gamma_t=o["gt"])
    rng = np.random.default_rng(o["seed"])
    out_img = _sample_one(model, schedule, codec, image, o["instruction"], g, o["steps"], rng)
    save_png(o["out"], out_img)
    cfg.write_next_to(o["out"])
    print(f"wrote {o['out']}")
    return 0


# ---------------------------------------------------------------------------
# eval


EVAL_SPEC = {
    "ckpt": {"default": None},
    "manifest": {"required": True},
    "split": {"default": "test"},
    "report": {"required": True},
    "gi": {"default": 1.5, "parse": float},
    "gt": {"default": 7.5, "parse": float},
    "steps": {"default": 100, "parse": int},
    "seed": {"default": 0, "parse": int},
    "oracle": {"default": False, "parse": lambda v: str(v).lower() in ("1", "true", "yes")},
    "csv": {"default": None},
    "cls_metric": {"default": "l1"},
}


def cmd_eval(cfg: RunConfig) -> int:
    from .evaluate import evaluate_split, oracle_infer_fn

    o = cfg.options
    try:
        manifest = Manifest.load(o["manifest"])
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise UserError(f"cannot load manifest {o['manifest']}: {err}")

    if o["oracle"]:
        infer_fn = oracle_infer_fn(manifest)
    else:
        if not o["ckpt"]:
            raise UserError("eval needs --ckpt (or --oracle true)")
        model, schedule, codec, _ = _load_ckpt(o["ckpt"])
        g = GuidanceConfig(gamma_i=o["gi"], gamma_t=o["gt"])
        counter = {"i": 0}

        def infer_fn(record, inp, text):
            rng = np.random.default_rng([o["seed"], counter["i"]])
            counter["i"] += 1
            return _sample_one(model, schedule, codec, inp, text, g, o["steps"], rng)

    rows: list[dict] | None = [] if o["csv"] else None
    reports = evaluate_split(
        manifest,
        o["split"],
        infer_fn,
        decode_cfg={"cls_metric": o["cls_metric"], "gi": o["gi"], "gt": o["gt"]},
        sample_scores=rows,
    )
    payload = {task: rep.to_json() for task, rep in sorted(reports.items())}
    atomic_write_text(o["report"], canonical_json(payload) + "\n")
    cfg.write_next_to(o["report"])
    if rows is not None:
        lines = ["task_id,input_path,score"]
        lines += [f"{r['task_id']},{r['input_path']},{r['score']:.6g}" for r in rows]
        atomic_write_text(o["csv"], "\n".join(lines) + "\n")
    for task, rep in sorted(reports.items()):
        stats = " ".join(f"{k}={v:.4f}" for k, v in sorted(rep.metrics.items()))
        print(f"{task}: {stats} ({rep.sample_count} samples)")
    return 0


# ---------------------------------------------------------------------------
# guidance-grid


GRID_SPEC = {
    "ckpt": {"required": True},
    "image": {"required": True},
    "instruction": {"required": True},
    "gi_list": {"default": [1.0, 1.5, 2.0], "parse": _floats},
    "gt_list": {"default": [5.0, 7.5, 10.0], "parse": _floats},
    "steps": {"default": 100, "parse": int},
    "seed": {"default": 0, "parse": int},
    "out": {"required": True},
}

_MARGIN = 18  # label strip, pixels


def _tile_grid(cells: dict[tuple[float, float], np.ndarray], gis, gts) -> np.ndarray:
    from PIL import Image, ImageDraw

    res = next(iter(cells.values())).shape[0]
    height = _MARGIN + len(gis) * res
    width = _MARGIN + len(gts) * res
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    for r, gi in enumerate(gis):
        for c, gt in enumerate(gts):
            tile = Image.fromarray(cells[(gi, gt)])
            canvas.paste(tile, (_MARGIN + c * res, _MARGIN + r * res))
    # Labels live on their own strips so long text clips at the margin
    # instead of bleeding into the sample cells.
    def _label_strip(text: str) -> Image.Image:
        strip = Image.new("RGB", (res, _MARGIN), (255, 255, 255))
        ImageDraw.Draw(strip).text((2, 3), text, fill=(0, 0, 0))
        return strip

    for c, gt in enumerate(gts):
        canvas.paste(_label_strip(f"gt={gt:g}"), (_MARGIN + c * res, 0))
    for r, gi in enumerate(gis):
        strip = _label_strip(f"gi={gi:g}").rotate(90, expand=True)
        canvas.paste(strip, (0, _MARGIN + r * res))
    return np.asarray(canvas)


def cmd_guidance_grid(cfg: RunConfig) -> int:
    o = cfg.options
    model, schedule, codec, _ = _load_ckpt(o["ckpt"])
    try:
        image = load_png_rgb(o["image"])
    except OSError as err:
        raise UserError(f"cannot read image {o['image']}: {err}")
    gis, gts = o["gi_list"], o["gt_list"]
    if not gis or not gts:
        raise UserError("gi-list and gt-list must be non-empty")
    cells = {}
    for gi in gis:
        for gt in gts:
            # same seed per cell so only the guidance scales vary
            rng = np.random.default_rng(o["seed"])
            try:
                cells[(gi, gt)] = _sample_one(
                    model, schedule, codec, image, o["instruction"],
                    GuidanceConfig(gamma_i=gi, gamma_t=gt), o["steps"], rng,
                )
            except Exception as err:
                raise RuntimeError(f"guidance grid cell (gi={gi}, gt={gt}) failed: {err}")
    save_png(o["out"], _tile_grid(cells, gis, gts))
    cfg.write_next_to(o["out"])
    print(f"wrote {len(gis)}x{len(gts)} grid to {o['out']}")
    return 0


# ---------------------------------------------------------------------------
# fetch-paraphrases


FETCH_SPEC = {
    "url": {"default": None},
    "token": {"default": None},
    "task": {"required": True},
    "n": {"default": 5, "parse": int},
    "template": {"default": None},
    "bank": {"required": True},
    "timeout": {"default": 10.0, "parse": float},
}


def cmd_fetch_paraphrases(cfg: RunConfig) -> int:
    from .prompts import FIXED_TEMPLATES

    o = cfg.options
    url = o["url"] or os.environ.get(ENV_PREFIX + "PARAPHRASER_URL")
    if not url:
        raise UserError("no paraphraser endpoint: pass --url or set TASKPAINT_PARAPHRASER_URL")
    token = o["token"] or os.environ.get(ENV_PREFIX + "PARAPHRASER_TOKEN")
    if o["task"] not in TASKS:
        raise UserError(f"unknown task {o['task']!r}; one of {TASKS}")
    bank_path = Path(o["bank"])
    bank = ParaphraseBank.load(bank_path) if bank_path.exists() else ParaphraseBank.bundled()
    template = o["template"] or FIXED_TEMPLATES[o["task"]]
    config = ParaphraserConfig(url=url, auth_token=token, timeout=o["timeout"])
    try:
        got = fetch_paraphrases(o["task"], template, o["n"], config, bank=bank)
    except ConnectionError as err:
        raise UserError(str(err))
    bank.save(bank_path)
    cfg.write_next_to(bank_path)
    print(f"merged {len(got)} paraphrases into {bank_path}")
    return 0


# ---------------------------------------------------------------------------
# wiring


_SUBCOMMANDS = {
    "build-dataset": (BUILD_SPEC, cmd_build_dataset, "pool sources into a dataset manifest"),
    "train": (TRAIN_SPEC, cmd_train, "train a denoiser on a manifest"),
    "infer": (INFER_SPEC, cmd_infer, "run one instruction on one image"),
    "eval": (EVAL_SPEC, cmd_eval, "score a checkpoint on a manifest split"),
    "guidance-grid": (GRID_SPEC, cmd_guidance_grid, "sweep guidance scales into a tiled image"),
    "fetch-paraphrases": (FETCH_SPEC, cmd_fetch_paraphrases, "extend the paraphrase bank via HTTP"),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="taskpaint", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name, (spec, _, help_text) in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON file with option defaults")
        p.add_argument("--verbose", action="store_true")
        for opt in spec:
            flag = "--" + opt.replace("_", "-")
            p.add_argument(flag, dest=opt, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return _fail("error: a subcommand is required", code=1)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO)
    spec, handler, _ = _SUBCOMMANDS[args.subcommand]
    try:
        cfg = _resolve(args.subcommand, args, spec)
        return handler(cfg)
    except UserError as err:
        return _fail(f"error: {err}", code=1)
    except (FileNotFoundError, ValueError, TrainingDiverged) as err:
        return _fail(f"error: {err}", code=1)
    except Exception as err:  # anything else is a bug or runtime fault
        log.exception("internal error")
        return _fail(f"internal error: {err}", code=2)


def entrypoint() -> None:  # console script target
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
