"""Noise schedules and the forward/reverse diffusion processes.

Steps are 1-based: t runs from 1 (least noisy) to T. Internally arrays are
0-indexed, so entry t-1 describes step t. The marginal of t forward steps
has the closed form z_t = alpha_t z_0 + sigma_t eps with
alpha_t^2 = prod_{s<=t}(1 - beta_s) and sigma_t^2 = 1 - alpha_t^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray  # (T,) per-step noise variance
    alpha: np.ndarray  # (T,) cumulative signal scale
    sigma: np.ndarray  # (T,) cumulative noise scale
    rho: np.ndarray  # (T,) reverse-process std, rho_t^2 = beta_t

    @property
    def T(self) -> int:
        return len(self.beta)

    def _check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"step t={t} outside [1, {self.T}]")
        return t - 1

    def beta_t(self, t: int) -> float:
        return float(self.beta[self._check_t(t)])

    def alpha_t(self, t: int) -> float:
        return float(self.alpha[self._check_t(t)])

    def sigma_t(self, t: int) -> float:
        return float(self.sigma[self._check_t(t)])

    def rho_t(self, t: int) -> float:
        return float(self.rho[self._check_t(t)])


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with derived cumulative scales."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_sq = np.cumprod(1.0 - beta)
    alpha = np.sqrt(alpha_sq)
    sigma = np.sqrt(1.0 - alpha_sq)
    return NoiseSchedule(beta=beta, alpha=alpha, sigma=sigma, rho=np.sqrt(beta))


def forward_sample(z0: np.ndarray, t: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """Closed-form noising: alpha_t z0 + sigma_t noise."""
    z0 = np.asarray(z0)
    noise = np.asarray(noise)
    if noise.shape != z0.shape:
        raise ValueError(f"noise shape {noise.shape} does not match z0 shape {z0.shape}")
    return schedule.alpha_t(t) * z0 + schedule.sigma_t(t) * noise


def iterate_forward(z0: np.ndarray, t: int, schedule: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Compose t single noising steps z_s = sqrt(1-beta_s) z_{s-1} + sqrt(beta_s) eps."""
    schedule._check_t(t)
    z = np.asarray(z0, dtype=np.float64)
    for s in range(1, t + 1):
        b = schedule.beta_t(s)
        z = np.sqrt(1.0 - b) * z + np.sqrt(b) * rng.standard_normal(z.shape)
    return z


def ddpm_step(
    z_t: np.ndarray,
    t: int,
    eps_hat: np.ndarray,
    schedule: NoiseSchedule,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step: mean from the eps-parameterization plus rho_t noise.

    mu = (z_t - beta_t * eps_hat / sigma_t) / sqrt(1 - beta_t); the final
    step (t=1) is deterministic.
    """
    b = schedule.beta_t(t)
    mu = (z_t - b * eps_hat / schedule.sigma_t(t)) / np.sqrt(1.0 - b)
    if t == 1 or noise is None:
        return mu
    return mu + schedule.rho_t(t) * noise
