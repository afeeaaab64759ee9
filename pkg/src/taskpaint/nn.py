"""Minimal neural-net layers with hand-written backprop, NHWC layout.

Everything runs on plain numpy. Each layer caches what its backward pass
needs; backward(dout) returns dx and accumulates parameter gradients into
the shared ParamStore. Layers are single-use per forward pass (no weight
sharing), which keeps the caching model trivial.
"""

from __future__ import annotations

import re

import numpy as np

from .utils import stable_bucket


class ParamStore:
    """Named parameter tensors plus matching gradient buffers."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.asarray(value, dtype=self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self.params):
            missing = set(self.params) - set(values)
            extra = set(values) - set(self.params)
            raise ValueError(f"parameter name mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for k, v in values.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k!r}: {v.shape} vs {self.params[k].shape}")
            self.params[k][...] = v


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    """3x3-style convolution via explicit patch slices; stride 1 or 2.

    Padding is k//2 on each side, so stride 1 preserves the spatial size and
    stride 2 halves it (even inputs assumed).
    """

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 k: int = 3, stride: int = 1, rng: np.random.Generator | None = None,
                 zero_init: bool = False):
        self.name = name
        self.k = k
        self.stride = stride
        self.c_in = c_in
        self.c_out = c_out
        fan_in = k * k * c_in
        if zero_init:
            w = np.zeros((k, k, c_in, c_out))
        else:
            w = _uniform_init(rng, (k, k, c_in, c_out), fan_in)
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", np.zeros(c_out))
        self.store = store
        self._cache = None

    def _out_hw(self, h: int, w: int) -> tuple[int, int]:
        pad = self.k // 2
        ho = (h + 2 * pad - self.k) // self.stride + 1
        wo = (w + 2 * pad - self.k) // self.stride + 1
        return ho, wo

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, _ = x.shape
        k, s, pad = self.k, self.stride, self.k // 2
        ho, wo = self._out_hw(h, w)
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        cols = np.empty((n, ho, wo, k, k, self.c_in), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i : i + s * ho : s, j : j + s * wo : s, :]
        flat = cols.reshape(n * ho * wo, k * k * self.c_in)
        out = flat @ self.w.reshape(k * k * self.c_in, self.c_out) + self.b
        self._cache = (flat, x.shape, xp.shape)
        return out.reshape(n, ho, wo, self.c_out)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        flat, x_shape, xp_shape = self._cache
        n, h, w, _ = x_shape
        k, s, pad = self.k, self.stride, self.k // 2
        ho, wo = dout.shape[1:3]
        dflat = dout.reshape(n * ho * wo, self.c_out)
        self.store.grads[f"{self.name}.w"] += (flat.T @ dflat).reshape(self.w.shape)
        self.store.grads[f"{self.name}.b"] += dflat.sum(axis=0)
        dcols = (dflat @ self.w.reshape(k * k * self.c_in, self.c_out).T).reshape(
            n, ho, wo, k, k, self.c_in
        )
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + s * ho : s, j : j + s * wo : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pad : pad + h, pad : pad + w, :]


class Linear:
    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator | None = None, zero_init: bool = False):
        self.name = name
        w = np.zeros((d_in, d_out)) if zero_init else _uniform_init(rng, (d_in, d_out), d_in)
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", np.zeros(d_out))
        self.store = store
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x
        return x @ self.w + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._cache
        self.store.grads[f"{self.name}.w"] += x.T @ dout
        self.store.grads[f"{self.name}.b"] += dout.sum(axis=0)
        return dout @ self.w.T


class GroupNorm:
    """Normalize over (H, W, C/groups) per sample and group, then affine."""

    EPS = 1e-5

    def __init__(self, store: ParamStore, name: str, channels: int, groups: int = 8):
        if channels % groups:
            raise ValueError(f"channels {channels} not divisible by groups {groups}")
        self.name = name
        self.groups = groups
        self.channels = channels
        self.gamma = store.add(f"{name}.gamma", np.ones(channels))
        self.beta = store.add(f"{name}.beta", np.zeros(channels))
        self.store = store
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        g = self.groups
        xg = x.reshape(n, h, w, g, c // g)
        mu = xg.mean(axis=(1, 2, 4), keepdims=True)
        var = xg.var(axis=(1, 2, 4), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.EPS)
        xhat = ((xg - mu) * inv).reshape(n, h, w, c)
        self._cache = (xhat, inv)
        return xhat * self.gamma + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        n, h, w, c = dout.shape
        g = self.groups
        self.store.grads[f"{self.name}.gamma"] += (dout * xhat).sum(axis=(0, 1, 2))
        self.store.grads[f"{self.name}.beta"] += dout.sum(axis=(0, 1, 2))
        dxhat = (dout * self.gamma).reshape(n, h, w, g, c // g)
        xhat_g = xhat.reshape(n, h, w, g, c // g)
        m1 = dxhat.mean(axis=(1, 2, 4), keepdims=True)
        m2 = (dxhat * xhat_g).mean(axis=(1, 2, 4), keepdims=True)
        dx = inv * (dxhat - m1 - xhat_g * m2)
        return dx.reshape(n, h, w, c)


class SiLU:
    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        s = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, s)
        return x * s

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, s = self._cache
        return dout * s * (1.0 + x * (1.0 - s))


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample_nearest2_backward(dout: np.ndarray) -> np.ndarray:
    n, h2, w2, c = dout.shape
    return dout.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Fixed sin/cos features of a (batch,) step vector."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def hash_tokens(text: str, n_buckets: int) -> np.ndarray:
    """Bucket ids for the words of a string plus adjacent-word bigrams.

    Bigrams keep word-order information that a pure bag would lose, e.g. the
    two color slots of a classification instruction.
    """
    words = _TOKEN_RE.findall(text.lower())
    tokens = list(words) + [f"{a}_{b}" for a, b in zip(words, words[1:])]
    if not tokens:
        return np.zeros(0, dtype=np.int64)
    return np.array([stable_bucket(tok, n_buckets) for tok in tokens], dtype=np.int64)


class HashedBagEmbedding:
    """Mean-pooled learned embedding over hashed token ids."""

    def __init__(self, store: ParamStore, name: str, n_buckets: int, dim: int,
                 rng: np.random.Generator):
        self.name = name
        self.n_buckets = n_buckets
        self.dim = dim
        self.table = store.add(f"{name}.table", rng.normal(0.0, 0.02, size=(n_buckets, dim)))
        self.store = store
        self._cache = None

    def forward(self, ids_batch: list[np.ndarray], dtype=None) -> np.ndarray:
        dtype = dtype or self.table.dtype
        out = np.zeros((len(ids_batch), self.dim), dtype=dtype)
        for i, ids in enumerate(ids_batch):
            if len(ids):
                out[i] = self.table[ids].mean(axis=0)
        self._cache = ids_batch
        return out

    def backward(self, dout: np.ndarray) -> None:
        ids_batch = self._cache
        dtable = self.store.grads[f"{self.name}.table"]
        for i, ids in enumerate(ids_batch):
            if len(ids):
                np.add.at(dtable, ids, dout[i] / len(ids))
