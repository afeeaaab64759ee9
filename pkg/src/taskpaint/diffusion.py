"""Conditional noise-matching loss and dual-scale classifier-free guidance.

The loss draws a timestep and noise per item, forms the noised latent, and
regresses the network output onto the drawn noise. Conditioning dropout
replaces the image and/or text condition with learned null embeddings so the
same network also models the partially and fully unconditional predictors
that guidance combines at sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import Denoiser
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class DropoutConfig:
    """Per-sample conditioning dropout rates (text-only, image-only, both)."""

    p_text: float = 0.05
    p_image: float = 0.05
    p_both: float = 0.05

    def __post_init__(self):
        for p in (self.p_text, self.p_image, self.p_both):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"dropout rates must be in [0, 1], got {self}")
        if self.p_text + self.p_image + self.p_both > 1.0 + 1e-12:
            raise ValueError(f"dropout rates sum above 1: {self}")

    @property
    def p_none(self) -> float:
        return 1.0 - (self.p_text + self.p_image + self.p_both)


NO_DROPOUT = DropoutConfig(0.0, 0.0, 0.0)
FULL_DROPOUT = DropoutConfig(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scales: gamma_i weights the image condition, gamma_t the text."""

    gamma_i: float = 1.5
    gamma_t: float = 7.5

    def __post_init__(self):
        for gname, gval in (("gamma_i", self.gamma_i), ("gamma_t", self.gamma_t)):
            if not np.isfinite(gval) or gval < 0:
                raise ValueError(f"{gname} must be finite and >= 0, got {gval}")


@dataclass
class TrainingBatch:
    """Latent-space training items: targets, image conditions, token ids."""

    z0: np.ndarray  # (N, h, w, C) encoded targets v(y)
    x_lat: np.ndarray  # (N, h, w, C) encoded input images x
    text_ids: list[np.ndarray]  # hashed token ids per item

    def __post_init__(self):
        if len(self.z0) == 0:
            raise ValueError("empty batch")
        if self.z0.shape != self.x_lat.shape or len(self.text_ids) != len(self.z0):
            raise ValueError("batch components disagree in length/shape")


def _draw_dropout(n: int, cfg: DropoutConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Categorical dropout per sample.

    Certain outcomes skip the rng draw entirely, so a fully-unconditional
    configuration consumes the same rng stream as a loss with no dropout
    logic at all.
    """
    drop_img = np.zeros(n, dtype=bool)
    drop_text = np.zeros(n, dtype=bool)
    if cfg.p_none == 1.0:
        return drop_img, drop_text
    if cfg.p_both == 1.0:
        return ~drop_img, ~drop_text
    u = rng.random(n)
    text_only = u < cfg.p_text
    image_only = (u >= cfg.p_text) & (u < cfg.p_text + cfg.p_image)
    both = (u >= cfg.p_text + cfg.p_image) & (u < cfg.p_text + cfg.p_image + cfg.p_both)
    drop_text = text_only | both
    drop_img = image_only | both
    return drop_img, drop_text


def _noise_batch(
    z0: np.ndarray, schedule: NoiseSchedule, rng: np.random.Generator, dtype
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(z0)
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal(z0.shape).astype(dtype)
    a = schedule.alpha[t - 1].astype(dtype)[:, None, None, None]
    s = schedule.sigma[t - 1].astype(dtype)[:, None, None, None]
    z_t = a * np.asarray(z0, dtype=dtype) + s * eps
    return z_t, t, eps


def _finish_loss(model: Denoiser, eps_hat: np.ndarray, eps: np.ndarray, n: int) -> float:
    diff = eps_hat - eps
    loss = float((diff.astype(np.float64) ** 2).sum() / n)
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss: |eps_hat| max {np.abs(eps_hat).max():.3e}, "
            f"any nan {np.isnan(eps_hat).any()}"
        )
    model.backward((2.0 / n) * diff.astype(model.dtype))
    return loss


def loss_conditional(
    model: Denoiser,
    batch: TrainingBatch,
    schedule: NoiseSchedule,
    dropout: DropoutConfig,
    rng: np.random.Generator,
) -> float:
    """Noise-matching loss with conditioning dropout; accumulates gradients.

    Per item: squared error summed over latent elements; mean over the
    batch. Gradients for all parameters land in model.store.grads (zeroed
    first).
    """
    n = len(batch.z0)
    model.store.zero_grads()
    z_t, t, eps = _noise_batch(batch.z0, schedule, rng, model.dtype)
    drop_img, drop_text = _draw_dropout(n, dropout, rng)
    eps_hat = model.forward(z_t, t, batch.x_lat, batch.text_ids, drop_img, drop_text)
    return _finish_loss(model, eps_hat, eps, n)


def loss_unconditional(
    model: Denoiser,
    z0: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> float:
    """Plain denoising loss with null conditions everywhere."""
    n = len(z0)
    model.store.zero_grads()
    z_t, t, eps = _noise_batch(z0, schedule, rng, model.dtype)
    eps_hat = model.forward(z_t, t, None, None)
    return _finish_loss(model, eps_hat, eps, n)


def cfg_predict(
    model: Denoiser,
    t: np.ndarray,
    z_t: np.ndarray,
    x_lat: np.ndarray | None,
    text_ids: list[np.ndarray] | None,
    g: GuidanceConfig,
) -> np.ndarray:
    """Guided noise prediction.

    eps(null,null) + gamma_i * (eps(x,null) - eps(null,null))
                   + gamma_t * (eps(x,text) - eps(x,null)).
    The collapse points (1,1), (1,0) and (0,0) take single-evaluation
    shortcuts so they are bit-exact, not just algebraically equal.
    """
    gi, gt = g.gamma_i, g.gamma_t
    if (gi, gt) == (1.0, 1.0):
        return model.forward(z_t, t, x_lat, text_ids)
    if (gi, gt) == (1.0, 0.0):
        return model.forward(z_t, t, x_lat, None)
    if (gi, gt) == (0.0, 0.0):
        return model.forward(z_t, t, None, None)
    e_uu = model.forward(z_t, t, None, None)
    e_xu = model.forward(z_t, t, x_lat, None)
    if gt == 0.0:
        return e_uu + gi * (e_xu - e_uu)
    e_xt = model.forward(z_t, t, x_lat, text_ids)
    return e_uu + gi * (e_xu - e_uu) + gt * (e_xt - e_xu)
