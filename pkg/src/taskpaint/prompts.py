"""Natural-language task instructions.

Each task has a fixed template with slots (%category%, %color_1%, %color_2%).
A bundled paraphrase bank provides rephrased variants offline; an external
HTTP paraphraser can extend the bank, with every candidate validated to keep
the task's slot markers.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .utils import atomic_write_text

TASKS = ("segmentation", "detection", "depth", "classification")

CATEGORY_SLOT = "%category%"
COLOR1_SLOT = "%color_1%"
COLOR2_SLOT = "%color_2%"

FIXED_TEMPLATES = {
    "segmentation": "Segment the %category%",
    "detection": "Detect the %category%",
    "depth": "Estimate the depth of this image.",
    "classification": "Display %color_1% if the image contains %category%, else display %color_2%",
}

# Rephrased variants bundled so the pipeline needs no network. The
# classification rows carry the full two-color decision form so that every
# bank entry keeps all the slots of its task's fixed template.
BUNDLED_PARAPHRASES = {
    "segmentation": [
        "Segment the %category%.",
        "Please break down the %category% into individual parts.",
        "Can you provide me with a segment of the %category%?",
        "Please divide the %category% into smaller parts.",
        "Please perform image segmentation to isolate the %category% in this image.",
        "Help me segment the %category%.",
        "Would you be willing to segment the %category%?",
    ],
    "detection": [
        "Detect the %category%",
        "Can you help me detect the %category%?",
        "Please employ bounding boxes for the purpose of %category% detection.",
        "Locate the %category%'s presence.",
        "Please use bounding boxes to identify the presence of a %category%.",
        "Detect and identify the %category%'s location.",
        "Utilize bounding boxes in order to identify the presence of the %category%.",
    ],
    "classification": [
        "Show %color_1% if there exists a %category% in the figure, else display %color_2%.",
        "Display an %color_1% if a %category% is present in the figure, else display %color_2%.",
        "In case a %category% exists in the figure, display an %color_1%, else display %color_2%.",
        "If a %category% is present in the figure, indicate it with %color_1%, else display %color_2%.",
        "If there is a %category% in the figure, show it as %color_1%, else display %color_2%.",
        "Show %color_1% if the figure contains a %category%, else display %color_2%.",
        "Show an %color_1% if there is a %category% within the figure, else display %color_2%.",
    ],
    "depth": [
        "Estimate the depth of this image.",
        "Approximate the depth of this image.",
        "Make an estimation of how deep the this image is.",
        "Provide a rough calculation of the image's depth.",
        "Give an approximate measurement of the image's depth.",
        "Make an informed guess of the depth of the image.",
        "Make an estimation of how deep the image goes.",
    ],
}

# Segmentation phrasings deliberately absent from the bundled bank, used to
# probe robustness to instruction wording the model never trained on.
HELDOUT_SEGMENTATION_PHRASINGS = [
    "Segment %category%.",
    "Can you help me segment the %category%?",
    "Highlight the image parts corresponding to the %category%.",
    "Please highlight the image segment containing %category%.",
    "Which image segments contain the %category%?",
]


def required_slots(task_id: str) -> tuple[str, ...]:
    if task_id not in TASKS:
        raise ValueError(f"unknown task {task_id!r}, expected one of {TASKS}")
    if task_id in ("segmentation", "detection"):
        return (CATEGORY_SLOT,)
    if task_id == "classification":
        return (CATEGORY_SLOT, COLOR1_SLOT, COLOR2_SLOT)
    return ()


def validate_template(task_id: str, text: str) -> bool:
    """A usable template keeps every slot of its task and no stray markers."""
    if not text:
        return False
    remainder = text
    for slot in required_slots(task_id):
        if slot not in remainder:
            return False
        remainder = remainder.replace(slot, "")
    return "%" not in remainder


@dataclass(frozen=True)
class Instruction:
    text: str
    task_id: str
    source: str  # fixed | bank | external
    category: str | None = None
    colors: tuple[str, str] | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("instruction text is empty")
        if "%" in self.text:
            raise ValueError(f"unsubstituted slot marker in instruction: {self.text!r}")
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task {self.task_id!r}")

    def to_json(self) -> dict:
        obj = {"text": self.text, "task_id": self.task_id, "source": self.source}
        if self.category is not None:
            obj["category"] = self.category
        if self.colors is not None:
            obj["colors"] = list(self.colors)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Instruction":
        colors = obj.get("colors")
        return cls(
            text=obj["text"],
            task_id=obj["task_id"],
            source=obj.get("source", "fixed"),
            category=obj.get("category"),
            colors=tuple(colors) if colors else None,
        )


def _substitute(template: str, task_id: str, category: str | None, colors: tuple[str, str] | None) -> str:
    text = template
    if CATEGORY_SLOT in text:
        if not category:
            raise ValueError(f"task {task_id!r} requires a category")
        text = text.replace(CATEGORY_SLOT, category)
    if COLOR1_SLOT in text or COLOR2_SLOT in text:
        if not colors or len(colors) != 2:
            raise ValueError(f"task {task_id!r} requires a pair of color names")
        text = text.replace(COLOR1_SLOT, colors[0]).replace(COLOR2_SLOT, colors[1])
    return text


def render_template(
    template: str,
    task_id: str,
    source: str,
    category: str | None = None,
    colors: tuple[str, str] | None = None,
) -> Instruction:
    text = _substitute(template, task_id, category, colors)
    return Instruction(text=text, task_id=task_id, source=source, category=category, colors=colors)


def render_fixed(task_id: str, category: str | None = None, colors: tuple[str, str] | None = None) -> Instruction:
    """Deterministic instruction from the task's fixed template."""
    if task_id not in TASKS:
        raise ValueError(f"unknown task {task_id!r}")
    return render_template(FIXED_TEMPLATES[task_id], task_id, "fixed", category, colors)


@dataclass
class ParaphraseBank:
    """Per-task lists of instruction templates, all slot-validated."""

    templates: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for task_id, entries in self.templates.items():
            for entry in entries:
                if not validate_template(task_id, entry):
                    raise ValueError(f"template {entry!r} is invalid for task {task_id!r}")

    @classmethod
    def bundled(cls) -> "ParaphraseBank":
        """Fixed templates plus the bundled rephrasings, deduplicated."""
        bank = cls({task: [FIXED_TEMPLATES[task]] for task in TASKS})
        for task in TASKS:
            bank.merge(task, BUNDLED_PARAPHRASES[task])
        return bank

    def entries(self, task_id: str) -> list[str]:
        return list(self.templates.get(task_id, []))

    def size(self, task_id: str) -> int:
        return len(self.templates.get(task_id, []))

    def merge(self, task_id: str, candidates: list[str]) -> int:
        """Add valid, unseen candidates; returns how many were added."""
        have = self.templates.setdefault(task_id, [])
        seen = set(have)
        added = 0
        for cand in candidates:
            if cand in seen or not validate_template(task_id, cand):
                continue
            have.append(cand)
            seen.add(cand)
            added += 1
        return added

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.templates, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ParaphraseBank":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))


def render_rephrased(
    task_id: str,
    category: str | None = None,
    colors: tuple[str, str] | None = None,
    seed: int | np.random.Generator = 0,
    bank: ParaphraseBank | None = None,
) -> Instruction:
    """Instruction from a uniformly sampled bank template (seeded)."""
    bank = bank if bank is not None else ParaphraseBank.bundled()
    entries = bank.entries(task_id)
    if not entries:
        raise ValueError(f"paraphrase bank has no templates for task {task_id!r}")
    rng = np.random.default_rng(seed)
    template = entries[int(rng.integers(len(entries)))]
    return render_template(template, task_id, "bank", category, colors)


# ---------------------------------------------------------------------------
# external paraphraser


@dataclass(frozen=True)
class ParaphraserConfig:
    url: str
    auth_token: str | None = None
    timeout: float = 10.0
    max_retries: int = 3
    backoff: float = 0.5


def fetch_paraphrases(
    task_id: str,
    template: str,
    n: int,
    config: ParaphraserConfig,
    bank: ParaphraseBank | None = None,
) -> list[str]:
    """Request up to n paraphrases of a template from an HTTP service.

    POSTs {"template": ..., "n": ...} and expects {"candidates": [...]}.
    Candidates missing any slot marker are dropped. When a bank is given the
    survivors are merged into it. Network errors retry with backoff before
    surfacing.
    """
    import requests

    if n <= 0:
        return []
    headers = {}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"
    payload = {"template": template, "n": n}
    last_err: Exception | None = None
    for attempt in range(config.max_retries):
        try:
            resp = requests.post(config.url, json=payload, headers=headers, timeout=config.timeout)
            resp.raise_for_status()
            break
        except requests.RequestException as err:
            last_err = err
            if attempt + 1 < config.max_retries:
                time.sleep(config.backoff * 2**attempt)
    else:
        raise ConnectionError(f"paraphraser at {config.url} unreachable: {last_err}")

    candidates = resp.json().get("candidates", [])
    valid = []
    seen = set()
    for cand in candidates[:n]:
        if isinstance(cand, str) and cand not in seen and validate_template(task_id, cand):
            valid.append(cand)
            seen.add(cand)
    if bank is not None and valid:
        bank.merge(task_id, valid)
    return valid
