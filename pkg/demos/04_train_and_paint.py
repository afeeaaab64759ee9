"""Train a tiny model on one segmentation pair and paint the answer.

A miniature end-to-end loop: one (input, instruction, target) tuple,
a narrow denoiser, a short schedule, and a guided sampling pass.
Takes about a minute on one CPU core.
"""

import tempfile
from pathlib import Path

import numpy as np

from taskpaint.codecs import decode_segmentation, encode_segmentation
from taskpaint.denoiser import Denoiser, DenoiserConfig
from taskpaint.diffusion import DropoutConfig, GuidanceConfig
from taskpaint.latents import LatentCodec
from taskpaint.sampler import sample_euler_ancestral
from taskpaint.schedule import make_schedule
from taskpaint.training import TrainConfig, TrainItem, train_model
from taskpaint.utils import save_png

RES = 16

# one scene: a green square on dark gray, mask covers the square
inp = np.full((RES, RES, 3), 30, dtype=np.uint8)
mask = np.zeros((RES, RES), dtype=bool)
mask[4:12, 5:13] = True
inp[mask] = (0, 200, 80)
target = encode_segmentation(mask)
text = "Segment the square."

model = Denoiser(DenoiserConfig(width=24, cond_dim=64, time_dim=32, text_dim=16,
                                text_buckets=64, groups=4, seed=0))
schedule = make_schedule(T=20, beta_start=5e-3, beta_end=0.05)
codec = LatentCodec()
item = TrainItem(inp, target, text)

print("training 1200 steps on a single pair (coarse phase, then polish)...")
start = None
for steps, lr, seed in [(800, 1.5e-3, 4), (400, 2e-4, 5)]:
    result = train_model(model, schedule, codec, [item],
                         TrainConfig(steps=steps, batch_size=8, lr=lr, seed=seed,
                                     dropout=DropoutConfig(0.0, 0.0, 0.0)))
    start = start if start is not None else result.losses[0]
print(f"loss: {start:.1f} -> {np.mean(result.losses[-50:]):.2f}")

model.store.load_values(result.ema_params)
painted = sample_euler_ancestral(model, schedule, codec, inp, text,
                                 GuidanceConfig(1.0, 1.0), n_steps=20,
                                 rng=np.random.default_rng(7))
pred_mask = decode_segmentation(painted)
inter = np.logical_and(pred_mask, mask).sum()
union = np.logical_or(pred_mask, mask).sum()
print(f"painted mask IoU vs target: {inter / union:.3f}")

out = Path(tempfile.mkdtemp(prefix="taskpaint-demo-"))
strip = np.concatenate([inp, target, painted], axis=1)
save_png(out / "input_target_painted.png", strip)
print(f"side-by-side strip: {out / 'input_target_painted.png'}")
