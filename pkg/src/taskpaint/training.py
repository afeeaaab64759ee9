"""Training loop: Adam updates, EMA tracking, loss logging, divergence guard."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .denoiser import Denoiser
from .diffusion import DropoutConfig, TrainingBatch, loss_conditional
from .latents import LatentCodec
from .schedule import NoiseSchedule
from .utils import atomic_write_text


class TrainingDiverged(RuntimeError):
    pass


class Adam:
    """Adam with bias correction; parameters updated in place, sorted by name."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name in sorted(params):
            p, g = params[name], grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p, dtype=np.float64)
                self.v[name] = np.zeros_like(p, dtype=np.float64)
            m, v = self.m[name], self.v[name]
            g64 = g.astype(np.float64)
            m *= b1
            m += (1.0 - b1) * g64
            v *= b2
            v += (1.0 - b2) * g64 * g64
            update = self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p -= update.astype(p.dtype)


class EMA:
    """Exponential moving average of parameters, seeded from their start values."""

    def __init__(self, params: dict[str, np.ndarray], decay: float = 0.999):
        self.decay = decay
        self.values = {k: v.astype(np.float64) for k, v in params.items()}

    def update(self, params: dict[str, np.ndarray]) -> None:
        d = self.decay
        for k, v in params.items():
            self.values[k] *= d
            self.values[k] += (1.0 - d) * v

    def snapshot(self, dtype=np.float32) -> dict[str, np.ndarray]:
        return {k: v.astype(dtype) for k, v in self.values.items()}


@dataclass(frozen=True)
class TrainItem:
    """One training tuple already loaded into memory."""

    input_img: np.ndarray  # (H, W, 3) uint8
    target_img: np.ndarray  # (H, W, 3) uint8
    text: str


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-4
    ema_decay: float = 0.999
    seed: int = 0
    dropout: DropoutConfig = field(default_factory=DropoutConfig)
    divergence_factor: float = 10.0
    divergence_window: int = 100

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "ema_decay": self.ema_decay,
            "seed": self.seed,
            "dropout": [self.dropout.p_text, self.dropout.p_image, self.dropout.p_both],
            "divergence_factor": self.divergence_factor,
            "divergence_window": self.divergence_window,
        }


@dataclass
class TrainResult:
    steps: int
    losses: list[float]
    ema_losses: list[float]
    ema_params: dict[str, np.ndarray]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def loss_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,loss,ema_loss\n")
        for i, (loss, ema) in enumerate(zip(self.losses, self.ema_losses), start=1):
            buf.write(f"{i},{loss:.8g},{ema:.8g}\n")
        return buf.getvalue()

    def write_loss_csv(self, path) -> None:
        atomic_write_text(path, self.loss_csv())


def make_batch(
    items: list[TrainItem], idx: np.ndarray, codec: LatentCodec, model: Denoiser
) -> TrainingBatch:
    z0 = np.stack([codec.encode(items[i].target_img) for i in idx])
    x_lat = np.stack([codec.encode(items[i].input_img) for i in idx])
    text_ids = [model.tokenize(items[i].text) for i in idx]
    return TrainingBatch(z0=z0, x_lat=x_lat, text_ids=text_ids)


def train_model(
    model: Denoiser,
    schedule: NoiseSchedule,
    codec: LatentCodec,
    items: list[TrainItem],
    config: TrainConfig,
    progress=None,
) -> TrainResult:
    """Optimize the denoiser on (input, target, instruction) tuples.

    Batches are drawn uniformly over items with replacement. Raises
    TrainingDiverged when the loss exceeds divergence_factor times the
    initial loss for divergence_window consecutive steps.
    """
    if not items:
        raise ValueError("no training items")
    rng = np.random.default_rng(config.seed)
    adam = Adam(lr=config.lr)
    ema = EMA(model.store.params, decay=config.ema_decay)
    losses: list[float] = []
    ema_losses: list[float] = []
    ema_loss = None
    initial_loss = None
    bad_streak = 0

    for step in range(1, config.steps + 1):
        idx = rng.integers(0, len(items), size=config.batch_size)
        batch = make_batch(items, idx, codec, model)
        loss = loss_conditional(model, batch, schedule, config.dropout, rng)
        adam.step(model.store.params, model.store.grads)
        ema.update(model.store.params)

        ema_loss = loss if ema_loss is None else 0.99 * ema_loss + 0.01 * loss
        losses.append(loss)
        ema_losses.append(ema_loss)
        if initial_loss is None:
            initial_loss = loss

        if loss > config.divergence_factor * initial_loss:
            bad_streak += 1
            if bad_streak >= config.divergence_window:
                raise TrainingDiverged(
                    f"loss {loss:.4g} above {config.divergence_factor}x initial "
                    f"({initial_loss:.4g}) for {bad_streak} consecutive steps (step {step})"
                )
        else:
            bad_streak = 0

        if progress is not None:
            progress(step, loss, ema_loss)

    return TrainResult(
        steps=config.steps,
        losses=losses,
        ema_losses=ema_losses,
        ema_params=ema.snapshot(dtype=model.dtype),
    )
