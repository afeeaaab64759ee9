"""Named color palette used by classification instructions and targets.

The name <-> rgb mapping is bijective so instructions can refer to colors
textually and targets can be rendered without ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ColorSpec:
    name: str
    rgb: tuple[int, int, int]


PALETTE: dict[str, ColorSpec] = {
    c.name: c
    for c in [
        ColorSpec("red", (255, 0, 0)),
        ColorSpec("green", (0, 255, 0)),
        ColorSpec("blue", (0, 0, 255)),
        ColorSpec("yellow", (255, 255, 0)),
        ColorSpec("cyan", (0, 255, 255)),
        ColorSpec("magenta", (255, 0, 255)),
        ColorSpec("white", (255, 255, 255)),
        ColorSpec("black", (0, 0, 0)),
    ]
}


def color(name: str) -> ColorSpec:
    try:
        return PALETTE[name]
    except KeyError:
        raise KeyError(f"unknown color {name!r}; palette: {sorted(PALETTE)}") from None


def sample_color_pair(rng: np.random.Generator, pool: list[str] | None = None) -> tuple[str, str]:
    """Draw two distinct color names uniformly without replacement."""
    names = sorted(PALETTE) if pool is None else list(pool)
    if len(names) < 2:
        raise ValueError("color pool needs at least two entries")
    i, j = rng.choice(len(names), size=2, replace=False)
    return names[int(i)], names[int(j)]
