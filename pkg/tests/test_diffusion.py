import numpy as np
import pytest

from taskpaint.denoiser import Denoiser, DenoiserConfig
from taskpaint.diffusion import (
    FULL_DROPOUT,
    NO_DROPOUT,
    DropoutConfig,
    GuidanceConfig,
    TrainingBatch,
    cfg_predict,
    loss_conditional,
    loss_unconditional,
)
from taskpaint.schedule import make_schedule

CFG = DenoiserConfig(
    latent_channels=6,
    width=8,
    cond_dim=16,
    time_dim=8,
    text_dim=8,
    text_buckets=16,
    groups=4,
    seed=0,
)


def _batch(rng, n=4, hw=8, lc=6):
    z0 = rng.standard_normal((n, hw, hw, lc)).astype(np.float32)
    x = rng.standard_normal((n, hw, hw, lc)).astype(np.float32)
    ids = [np.array([i % 16, (i + 3) % 16]) for i in range(n)]
    return TrainingBatch(z0=z0, x_lat=x, text_ids=ids)


def _randomized_model(seed=1, dtype=np.float32):
    model = Denoiser(CFG, dtype=dtype)
    rng = np.random.default_rng(seed)
    for p in model.store.params.values():
        p += rng.normal(0.0, 0.05, size=p.shape).astype(p.dtype)
    return model


def test_dropout_config_validation():
    with pytest.raises(ValueError):
        DropoutConfig(p_text=-0.1)
    with pytest.raises(ValueError):
        DropoutConfig(p_text=0.5, p_image=0.4, p_both=0.2)
    assert DropoutConfig().p_none == pytest.approx(0.85)


def test_guidance_config_validation():
    with pytest.raises(ValueError):
        GuidanceConfig(gamma_i=-1.0)
    with pytest.raises(ValueError):
        GuidanceConfig(gamma_t=np.inf)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        TrainingBatch(
            z0=np.zeros((0, 4, 4, 6), dtype=np.float32),
            x_lat=np.zeros((0, 4, 4, 6), dtype=np.float32),
            text_ids=[],
        )


def test_zero_network_loss_is_latent_dimensionality():
    # zero output regresses onto standard normal noise: E loss = h*w*c
    model = Denoiser(CFG)  # zero-init head, untouched
    sched = make_schedule(T=100, beta_start=1e-3, beta_end=0.05)
    rng = np.random.default_rng(0)
    losses = [
        loss_conditional(model, _batch(np.random.default_rng(i), n=16), sched, NO_DROPOUT, rng)
        for i in range(8)
    ]
    dim = 8 * 8 * 6
    mean = np.mean(losses)
    # sd of the mean of 128 chi-square sums: sqrt(2*dim/128)
    assert abs(mean - dim) < 4 * np.sqrt(2.0 * dim / 128)


def test_full_dropout_equals_unconditional_bitwise():
    model = _randomized_model()
    sched = make_schedule(T=50, beta_start=1e-3, beta_end=0.05)
    batch = _batch(np.random.default_rng(3))
    loss_a = loss_conditional(model, batch, sched, FULL_DROPOUT, np.random.default_rng(7))
    grads_a = {k: v.copy() for k, v in model.store.grads.items()}
    loss_b = loss_unconditional(model, batch.z0, sched, np.random.default_rng(7))
    assert loss_a == loss_b
    for k, v in model.store.grads.items():
        assert np.array_equal(grads_a[k], v), k


def test_dropout_draw_changes_conditioning():
    model = _randomized_model()
    sched = make_schedule(T=50, beta_start=1e-3, beta_end=0.05)
    batch = _batch(np.random.default_rng(4))
    loss_none = loss_conditional(model, batch, sched, NO_DROPOUT, np.random.default_rng(5))
    loss_all = loss_conditional(model, batch, sched, FULL_DROPOUT, np.random.default_rng(5))
    assert loss_none != loss_all


def test_loss_gradients_populated():
    model = _randomized_model()
    sched = make_schedule(T=50, beta_start=1e-3, beta_end=0.05)
    loss = loss_conditional(model, _batch(np.random.default_rng(6)), sched, NO_DROPOUT, np.random.default_rng(8))
    assert np.isfinite(loss)
    total = sum(float(np.abs(g).sum()) for g in model.store.grads.values())
    assert total > 0


def test_nonfinite_loss_aborts():
    model = _randomized_model()
    model.store.params["head.w"][...] = np.inf
    sched = make_schedule(T=50, beta_start=1e-3, beta_end=0.05)
    with pytest.raises(FloatingPointError):
        loss_conditional(model, _batch(np.random.default_rng(9)), sched, NO_DROPOUT, np.random.default_rng(1))


def _cfg_inputs(rng, n=2, hw=8, lc=6):
    z = rng.standard_normal((n, hw, hw, lc)).astype(np.float32)
    t = np.full(n, 17.0)
    x = rng.standard_normal((n, hw, hw, lc)).astype(np.float32)
    ids = [np.array([1, 2]), np.array([4])]
    return z, t, x, ids


def test_cfg_collapse_points_bit_exact():
    model = _randomized_model(seed=2)
    rng = np.random.default_rng(10)
    z, t, x, ids = _cfg_inputs(rng)
    full = model.forward(z, t, x, ids)
    img_only = model.forward(z, t, x, None)
    none = model.forward(z, t, None, None)
    assert np.array_equal(cfg_predict(model, t, z, x, ids, GuidanceConfig(1.0, 1.0)), full)
    assert np.array_equal(cfg_predict(model, t, z, x, ids, GuidanceConfig(1.0, 0.0)), img_only)
    assert np.array_equal(cfg_predict(model, t, z, x, ids, GuidanceConfig(0.0, 0.0)), none)


def test_cfg_affine_in_scales():
    model = _randomized_model(seed=3)
    rng = np.random.default_rng(11)
    z, t, x, ids = _cfg_inputs(rng)

    def at(gi, gt):
        return cfg_predict(model, t, z, x, ids, GuidanceConfig(gi, gt)).astype(np.float64)

    base = at(1.3, 2.0)
    d_i = at(2.3, 2.0) - base
    d_t = at(1.3, 3.0) - base
    # doubling each delta doubles the change, and they compose additively
    assert np.allclose(at(3.3, 2.0) - base, 2 * d_i, atol=1e-5)
    assert np.allclose(at(1.3, 4.0) - base, 2 * d_t, atol=1e-5)
    assert np.allclose(at(2.3, 3.0) - base, d_i + d_t, atol=1e-5)


def test_cfg_matches_formula():
    model = _randomized_model(seed=4)
    rng = np.random.default_rng(12)
    z, t, x, ids = _cfg_inputs(rng)
    e_uu = model.forward(z, t, None, None).astype(np.float64)
    e_xu = model.forward(z, t, x, None).astype(np.float64)
    e_xt = model.forward(z, t, x, ids).astype(np.float64)
    gi, gt = 1.5, 7.5
    want = e_uu + gi * (e_xu - e_uu) + gt * (e_xt - e_xu)
    got = cfg_predict(model, t, z, x, ids, GuidanceConfig(gi, gt))
    assert np.allclose(got, want, atol=1e-4)
