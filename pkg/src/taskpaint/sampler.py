"""Euler ancestral sampling over a Karras noise ladder.

Sampling runs in the variance-exploding view x = z / alpha_t, where the
noise level is a single scale sigma_ve = sigma_t / alpha_t. The ladder
interpolates sigma^(1/rho) between the levels implied by the training
schedule's endpoints; each step takes an Euler move to sigma_down and
re-injects sigma_up of fresh noise (the ancestral split).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .denoiser import Denoiser
from .diffusion import GuidanceConfig, cfg_predict
from .latents import LatentCodec
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class KarrasConfig:
    rho: float = 7.0
    eta: float = 1.0
    sigma_min: float | None = None  # default: schedule's first-step level
    sigma_max: float | None = None  # default: schedule's last-step level


def karras_sigmas(n: int, sigma_min: float, sigma_max: float, rho: float = 7.0) -> np.ndarray:
    """Decreasing ladder of n noise levels plus a trailing zero."""
    if n < 1:
        raise ValueError(f"need n >= 1 steps, got {n}")
    if n == 1:
        return np.array([sigma_max, 0.0])
    ramp = np.linspace(0.0, 1.0, n)
    min_inv = sigma_min ** (1.0 / rho)
    max_inv = sigma_max ** (1.0 / rho)
    sigmas = (max_inv + ramp * (min_inv - max_inv)) ** rho
    return np.append(sigmas, 0.0)


def ancestral_split(sigma_from: float, sigma_to: float, eta: float = 1.0) -> tuple[float, float]:
    """Split a transition into a deterministic part and fresh noise.

    Returns (sigma_down, sigma_up) with sigma_down^2 + sigma_up^2 = sigma_to^2.
    """
    if eta == 0.0 or sigma_to == 0.0:
        return sigma_to, 0.0
    sigma_up = min(
        sigma_to,
        eta * np.sqrt(sigma_to**2 * (sigma_from**2 - sigma_to**2) / sigma_from**2),
    )
    sigma_down = np.sqrt(sigma_to**2 - sigma_up**2)
    return float(sigma_down), float(sigma_up)


def sample_ve(
    eps_fn: Callable[[np.ndarray, float], np.ndarray],
    shape: tuple,
    sigmas: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """Generic ancestral Euler loop in the variance-exploding view.

    eps_fn(x, sigma) predicts the unit noise in x at level sigma; the
    denoised estimate is x - sigma * eps.
    """
    x = (rng.standard_normal(shape) * sigmas[0]).astype(dtype)
    for i in range(len(sigmas) - 1):
        sigma = float(sigmas[i])
        eps = eps_fn(x, sigma)
        if not np.isfinite(eps).all():
            raise RuntimeError(f"non-finite noise prediction at sampling step {i} (sigma={sigma:.4g})")
        sigma_down, sigma_up = ancestral_split(sigma, float(sigmas[i + 1]), eta)
        x = x + eps * (sigma_down - sigma)
        if sigma_up > 0.0:
            x = x + (rng.standard_normal(shape) * sigma_up).astype(dtype)
        if not np.isfinite(x).all():
            raise RuntimeError(f"non-finite latent after sampling step {i}")
    return x


class VEBridge:
    """Converts the discrete-step noise predictor to a continuous-sigma one."""

    def __init__(self, schedule: NoiseSchedule):
        self.sigma_ve = schedule.sigma / schedule.alpha  # increasing in t
        self.log_sigma = np.log(self.sigma_ve)
        self.steps = np.arange(1, schedule.T + 1, dtype=np.float64)

    @property
    def sigma_min(self) -> float:
        return float(self.sigma_ve[0])

    @property
    def sigma_max(self) -> float:
        return float(self.sigma_ve[-1])

    def t_for_sigma(self, sigma: float) -> float:
        """Fractional training step whose noise level matches sigma."""
        return float(np.interp(np.log(sigma), self.log_sigma, self.steps))

    def alpha_for_sigma(self, sigma: float) -> float:
        return 1.0 / np.sqrt(1.0 + sigma * sigma)


def sample_batch(
    model: Denoiser,
    schedule: NoiseSchedule,
    codec: LatentCodec,
    images: np.ndarray,
    texts: list[str],
    g: GuidanceConfig,
    n_steps: int = 100,
    karras: KarrasConfig = KarrasConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample output images for a batch of (input image, instruction) pairs."""
    if len(images) != len(texts):
        raise ValueError(f"{len(images)} images vs {len(texts)} instructions")
    rng = rng if rng is not None else np.random.default_rng(0)
    bridge = VEBridge(schedule)
    sigma_min = karras.sigma_min if karras.sigma_min is not None else bridge.sigma_min
    sigma_max = karras.sigma_max if karras.sigma_max is not None else bridge.sigma_max
    sigmas = karras_sigmas(n_steps, sigma_min, sigma_max, karras.rho)

    x_lat = np.stack([codec.encode(img) for img in images]).astype(model.dtype)
    text_ids = [model.tokenize(t) for t in texts]
    n = len(images)

    def eps_fn(x_ve: np.ndarray, sigma: float) -> np.ndarray:
        a = bridge.alpha_for_sigma(sigma)
        t = np.full(n, bridge.t_for_sigma(sigma))
        z_t = (a * x_ve).astype(model.dtype)
        return cfg_predict(model, t, z_t, x_lat, text_ids, g)

    x0 = sample_ve(eps_fn, x_lat.shape, sigmas, karras.eta, rng, dtype=model.dtype)
    return np.stack([codec.decode(np.clip(z, -1.0, 1.0)) for z in x0])


def sample_euler_ancestral(
    model: Denoiser,
    schedule: NoiseSchedule,
    codec: LatentCodec,
    image: np.ndarray,
    text: str,
    g: GuidanceConfig,
    n_steps: int = 100,
    karras: KarrasConfig = KarrasConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Single-pair convenience wrapper around sample_batch."""
    return sample_batch(model, schedule, codec, image[None], [text], g, n_steps, karras, rng)[0]
