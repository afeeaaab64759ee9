"""Inspect the diffusion machinery: schedule, forward noising, guidance.

No training here, just the algebra the trainer and sampler rely on.
"""

import numpy as np

from taskpaint.denoiser import Denoiser, DenoiserConfig
from taskpaint.diffusion import GuidanceConfig, cfg_predict
from taskpaint.schedule import forward_sample, make_schedule

schedule = make_schedule(T=1000)
t = np.array([1, 250, 500, 750, 1000])
print("noise schedule (variance preserving):")
for ti in t:
    a, s = schedule.alpha_t(ti), schedule.sigma_t(ti)
    print(f"  t={ti:4d}  alpha={a:.4f}  sigma={s:.4f}  alpha^2+sigma^2={a*a+s*s:.12f}")

# forward noising: z_t = alpha_t z_0 + sigma_t eps
rng = np.random.default_rng(0)
z0 = rng.standard_normal((4, 8, 8, 12)).astype(np.float32)
eps = rng.standard_normal(z0.shape).astype(np.float32)
z_t = forward_sample(z0, 600, schedule, eps).astype(np.float32)
print(f"\nforward sample at t=600: z_t std {z_t.std():.3f} (target 1.0 for unit z_0)")

# guidance: two scales, one for the image condition, one for the text
model = Denoiser(DenoiserConfig(width=8, seed=0))
for p in model.store.params.values():
    # the output head starts at zero; jitter so the demo prints real numbers
    p += rng.normal(0.0, 0.02, size=p.shape).astype(p.dtype)
x_lat = rng.standard_normal(z0.shape).astype(np.float32)
ids = [model.tokenize("segment the circle")] * 4
tt = np.full(4, 600.0)

base = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(1.0, 1.0))
strong = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(1.5, 7.5))
uncond = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(0.0, 0.0))
print("\nclassifier-free guidance (image scale, text scale):")
print(f"  (1.0, 1.0) fully conditional   |eps| = {np.abs(base).mean():.4f}")
print(f"  (1.5, 7.5) amplified           |eps| = {np.abs(strong).mean():.4f}")
print(f"  (0.0, 0.0) fully unconditional |eps| = {np.abs(uncond).mean():.4f}")

# the combination is affine: doubling both deltas doubles the shift
g1 = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(2.0, 3.0))
g2 = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(3.0, 5.0))
extrapolated = 2.0 * g2 - g1  # = (4, 7) by affinity
direct = cfg_predict(model, tt, z_t, x_lat, ids, GuidanceConfig(4.0, 7.0))
print(f"\naffinity check: |2*eps(3,5) - eps(2,3) - eps(4,7)| = "
      f"{np.abs(extrapolated - direct).max():.2e}")
