"""Invertible image <-> latent mapping.

A space-to-depth patchify (patch p) folds each p x p pixel block into
channels, and an affine rescale maps [0, 255] onto [-1, 1]. The round trip
is bit-exact on 8-bit images after requantization, so no information is
lost between pixel space and latent space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LatentCodec:
    patch: int = 2

    @property
    def channels(self) -> int:
        return 3 * self.patch * self.patch

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        p = self.patch
        if height % p or width % p:
            raise ValueError(f"image size {height}x{width} not divisible by patch {p}")
        return (height // p, width // p, self.channels)

    def encode(self, img: np.ndarray) -> np.ndarray:
        """(H, W, 3) uint8 -> (H/p, W/p, 3p^2) float32 in [-1, 1]."""
        img = np.asarray(img)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
        h, w, _ = img.shape
        hh, ww, _ = self.latent_shape(h, w)
        p = self.patch
        z = img.reshape(hh, p, ww, p, 3).transpose(0, 2, 1, 3, 4).reshape(hh, ww, self.channels)
        return z.astype(np.float32) / 127.5 - 1.0

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Inverse of encode, requantized to uint8."""
        z = np.asarray(z)
        if z.ndim != 3 or z.shape[2] != self.channels:
            raise ValueError(f"expected (h, w, {self.channels}) latent, got shape {z.shape}")
        hh, ww, _ = z.shape
        p = self.patch
        img = z.reshape(hh, ww, p, p, 3).transpose(0, 2, 1, 3, 4).reshape(hh * p, ww * p, 3)
        return np.clip(np.rint((img.astype(np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)
