"""Noise-prediction network for conditional latent diffusion.

A small convolutional encoder-decoder over NHWC latents. The noisy latent
and the encoded input image are concatenated along channels; the timestep
(sinusoidal features through an MLP) and the instruction (hashed-bag
embedding through a projection) form a conditioning vector injected into
every stage via per-channel scale/shift. Dropped conditions are replaced by
dedicated learned null embeddings. The output head is zero-initialized so
an untrained network predicts exactly zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    Conv2d,
    GroupNorm,
    HashedBagEmbedding,
    Linear,
    ParamStore,
    SiLU,
    hash_tokens,
    sinusoidal_embedding,
    upsample_nearest2,
    upsample_nearest2_backward,
)


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 12
    width: int = 16
    cond_dim: int = 128
    time_dim: int = 64
    text_dim: int = 64
    text_buckets: int = 512
    groups: int = 8
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "width": self.width,
            "cond_dim": self.cond_dim,
            "time_dim": self.time_dim,
            "text_dim": self.text_dim,
            "text_buckets": self.text_buckets,
            "groups": self.groups,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DenoiserConfig":
        return cls(**obj)


class _ResBlock:
    """x + conv(act(gn(scale/shift(conv(act(gn(x))))))), conditioned."""

    def __init__(self, store: ParamStore, name: str, c: int, cond_dim: int,
                 groups: int, rng: np.random.Generator):
        self.c = c
        self.gn1 = GroupNorm(store, f"{name}.gn1", c, groups)
        self.act1 = SiLU()
        self.conv1 = Conv2d(store, f"{name}.conv1", c, c, rng=rng)
        self.film = Linear(store, f"{name}.film", cond_dim, 2 * c, rng=rng)
        self.gn2 = GroupNorm(store, f"{name}.gn2", c, groups)
        self.act2 = SiLU()
        self.conv2 = Conv2d(store, f"{name}.conv2", c, c, rng=rng)
        self._cache = None

    def forward(self, x: np.ndarray, cond: np.ndarray) -> np.ndarray:
        h = self.conv1.forward(self.act1.forward(self.gn1.forward(x)))
        sb = self.film.forward(cond)
        s, b = sb[:, : self.c], sb[:, self.c :]
        h2 = h * (1.0 + s[:, None, None, :]) + b[:, None, None, :]
        out = self.conv2.forward(self.act2.forward(self.gn2.forward(h2)))
        self._cache = (h, s)
        return x + out

    def backward(self, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, s = self._cache
        dh2 = self.gn2.backward(self.act2.backward(self.conv2.backward(dout)))
        ds = (dh2 * h).sum(axis=(1, 2))
        db = dh2.sum(axis=(1, 2))
        dcond = self.film.backward(np.concatenate([ds, db], axis=1))
        dh = dh2 * (1.0 + s[:, None, None, :])
        dx = self.gn1.backward(self.act1.backward(self.conv1.backward(dh)))
        return dout + dx, dcond


class Denoiser:
    def __init__(self, config: DenoiserConfig, dtype=np.float32):
        self.config = config
        self.store = ParamStore(dtype=dtype)
        rng = np.random.default_rng(config.seed)
        lc, w, cd, g = config.latent_channels, config.width, config.cond_dim, config.groups

        self.null_image = self.store.add("null.image", rng.normal(0.0, 0.02, size=lc))
        self.null_text = self.store.add("null.text", rng.normal(0.0, 0.02, size=config.text_dim))

        self.time_l1 = Linear(self.store, "time.l1", config.time_dim, cd, rng=rng)
        self.time_act = SiLU()
        self.time_l2 = Linear(self.store, "time.l2", cd, cd, rng=rng)
        self.text_embed = HashedBagEmbedding(self.store, "text.embed", config.text_buckets,
                                             config.text_dim, rng=rng)
        self.text_proj = Linear(self.store, "text.proj", config.text_dim, cd, rng=rng)

        self.stem = Conv2d(self.store, "stem", 2 * lc, w, rng=rng)
        self.rb1 = _ResBlock(self.store, "enc1", w, cd, g, rng)
        self.down1 = Conv2d(self.store, "down1", w, 2 * w, stride=2, rng=rng)
        self.rb2 = _ResBlock(self.store, "enc2", 2 * w, cd, g, rng)
        self.down2 = Conv2d(self.store, "down2", 2 * w, 4 * w, stride=2, rng=rng)
        self.rb3 = _ResBlock(self.store, "mid", 4 * w, cd, g, rng)
        self.upconv2 = Conv2d(self.store, "up2", 4 * w, 2 * w, rng=rng)
        self.fuse2 = Conv2d(self.store, "fuse2", 4 * w, 2 * w, rng=rng)
        self.rb4 = _ResBlock(self.store, "dec2", 2 * w, cd, g, rng)
        self.upconv1 = Conv2d(self.store, "up1", 2 * w, w, rng=rng)
        self.fuse1 = Conv2d(self.store, "fuse1", 2 * w, w, rng=rng)
        self.rb5 = _ResBlock(self.store, "dec1", w, cd, g, rng)
        self.head_gn = GroupNorm(self.store, "head.gn", w, g)
        self.head_act = SiLU()
        self.head = Conv2d(self.store, "head", w, lc, rng=rng, zero_init=True)

        self._cache = None

    @property
    def dtype(self):
        return self.store.dtype

    def tokenize(self, text: str) -> np.ndarray:
        return hash_tokens(text, self.config.text_buckets)

    def forward(
        self,
        z_t: np.ndarray,
        t: np.ndarray,
        img_cond: np.ndarray | None,
        text_ids: list[np.ndarray] | None,
        drop_img: np.ndarray | None = None,
        drop_text: np.ndarray | None = None,
    ) -> np.ndarray:
        """Predict the noise in z_t.

        img_cond=None or text_ids=None drops that condition for the whole
        batch; the boolean drop vectors do it per sample.
        """
        n = z_t.shape[0]
        dt = self.dtype
        z_t = np.ascontiguousarray(z_t, dtype=dt)

        if img_cond is None:
            drop_img = np.ones(n, dtype=bool)
            img_cond = np.zeros_like(z_t)
        elif drop_img is None:
            drop_img = np.zeros(n, dtype=bool)
        img_cond = np.asarray(img_cond, dtype=dt)
        null_img = np.broadcast_to(self.null_image, z_t.shape)
        img_in = np.where(drop_img[:, None, None, None], null_img, img_cond)

        if text_ids is None:
            drop_text = np.ones(n, dtype=bool)
            text_ids = [np.zeros(0, dtype=np.int64)] * n
        elif drop_text is None:
            drop_text = np.zeros(n, dtype=bool)
        bag = self.text_embed.forward(text_ids, dtype=dt)
        text_in = np.where(drop_text[:, None], self.null_text, bag)

        t_feat = sinusoidal_embedding(np.asarray(t, dtype=np.float64), self.config.time_dim).astype(dt)
        cond = self.time_l2.forward(self.time_act.forward(self.time_l1.forward(t_feat)))
        cond = cond + self.text_proj.forward(text_in)

        x0 = self.stem.forward(np.concatenate([z_t, img_in], axis=3))
        x1 = self.rb1.forward(x0, cond)
        x2 = self.rb2.forward(self.down1.forward(x1), cond)
        x3 = self.rb3.forward(self.down2.forward(x2), cond)
        u2 = self.upconv2.forward(upsample_nearest2(x3))
        y2 = self.rb4.forward(self.fuse2.forward(np.concatenate([u2, x2], axis=3)), cond)
        u1 = self.upconv1.forward(upsample_nearest2(y2))
        y1 = self.rb5.forward(self.fuse1.forward(np.concatenate([u1, x1], axis=3)), cond)
        out = self.head.forward(self.head_act.forward(self.head_gn.forward(y1)))

        self._cache = (drop_img, drop_text)
        return out

    def backward(self, dout: np.ndarray) -> None:
        """Accumulate parameter gradients for the last forward pass."""
        drop_img, drop_text = self._cache
        cfg = self.config
        w = cfg.width

        dy1 = self.head_gn.backward(self.head_act.backward(self.head.backward(dout)))
        dc1, dcond = self.rb5.backward(dy1)
        dcat1 = self.fuse1.backward(dc1)
        du1, dx1_skip = dcat1[..., :w], dcat1[..., w:]
        dy2 = upsample_nearest2_backward(self.upconv1.backward(du1))
        dc2, dc = self.rb4.backward(dy2)
        dcond += dc
        dcat2 = self.fuse2.backward(dc2)
        du2, dx2_skip = dcat2[..., : 2 * w], dcat2[..., 2 * w :]
        dx3 = upsample_nearest2_backward(self.upconv2.backward(du2))
        dx3, dc = self.rb3.backward(dx3)
        dcond += dc
        dx2 = self.down2.backward(dx3) + dx2_skip
        dx2, dc = self.rb2.backward(dx2)
        dcond += dc
        dx1 = self.down1.backward(dx2) + dx1_skip
        dx1, dc = self.rb1.backward(dx1)
        dcond += dc
        dstem = self.stem.backward(dx1)
        dimg_in = dstem[..., cfg.latent_channels :]

        if drop_img.any():
            self.store.grads["null.image"] += dimg_in[drop_img].sum(axis=(0, 1, 2))

        dtext_in = self.text_proj.backward(dcond)
        if drop_text.any():
            self.store.grads["null.text"] += dtext_in[drop_text].sum(axis=0)
        dbag = np.where(drop_text[:, None], 0.0, dtext_in).astype(dtext_in.dtype)
        self.text_embed.backward(dbag)
        self.time_l1.backward(self.time_act.backward(self.time_l2.backward(dcond)))
