import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftloc.cli import random_check_triplet, run_gradcheck
from driftloc.encoder import (EncoderConfig, encode, gradient_check,
                              init_model, small_check_config, train_step,
                              triplet_loss)
from driftloc.errors import HingeInactiveError, StochasticModelError
from driftloc.nn import AdamState
from driftloc.preprocess import FingerprintImage
from driftloc.sampler import Triplet


def rand_image(side, rng, n_real=None):
    return FingerprintImage(side, rng.random((side, side)),
                            n_real or side * side)


def small_model(seed=0, side=4, **overrides):
    cfg_kwargs = dict(conv1_filters=6, conv2_filters=8, fc_units=16,
                      embed_dim=3, dropout_rate=0.0, noise_sigma=0.0)
    cfg_kwargs.update(overrides)
    cfg = EncoderConfig(**cfg_kwargs)
    return init_model(cfg, side, seed)


def test_init_deterministic():
    m1, m2 = small_model(7), small_model(7)
    for name in m1.params:
        np.testing.assert_array_equal(m1.params[name], m2.params[name])


def test_init_rejects_tiny_inputs():
    cfg = small_check_config()
    for side in (1, 2):  # two 2x2 valid convolutions need side >= 3
        with pytest.raises(ValueError, match="too small"):
            init_model(cfg, side, 0)
    init_model(cfg, 3, 0)  # smallest legal side


def test_embed_dim_sets_output_width():
    rng = np.random.default_rng(0)
    for d in (3, 10):
        model = small_model(embed_dim=d)
        e = encode(model, rand_image(4, rng))
        assert e.shape == (d,)


def test_embeddings_unit_norm():
    rng = np.random.default_rng(1)
    model = small_model()
    for _ in range(100):
        e = encode(model, rand_image(4, rng))
        assert abs(np.linalg.norm(e) - 1.0) <= 1e-9


def test_train_mode_unit_norm():
    rng = np.random.default_rng(2)
    model = small_model(dropout_rate=0.25, noise_sigma=0.1)
    for _ in range(20):
        e = encode(model, rand_image(4, rng), mode="train", rng=rng)
        assert abs(np.linalg.norm(e) - 1.0) <= 1e-9


def test_inference_deterministic():
    rng = np.random.default_rng(3)
    model = small_model()
    img = rand_image(4, rng)
    np.testing.assert_array_equal(encode(model, img), encode(model, img))


def test_different_images_embed_differently():
    rng = np.random.default_rng(4)
    model = small_model()
    a, b = rand_image(4, rng), rand_image(4, rng)
    assert np.linalg.norm(encode(model, a) - encode(model, b)) > 1e-6


def test_rng_required_iff_training():
    rng = np.random.default_rng(5)
    model = small_model()
    img = rand_image(4, rng)
    with pytest.raises(ValueError, match="requires a generator"):
        encode(model, img, mode="train")
    with pytest.raises(ValueError, match="deterministic"):
        encode(model, img, mode="infer", rng=rng)
    with pytest.raises(ValueError, match="mode"):
        encode(model, img, mode="test")


def test_side_mismatch_rejected():
    rng = np.random.default_rng(6)
    model = small_model(side=4)
    with pytest.raises(ValueError, match="side"):
        encode(model, rand_image(5, rng))


# --- triplet loss -----------------------------------------------------------

def test_loss_boundary_zero():
    # ea == ep and the negative gap exactly equals alpha: loss is 0
    ea = np.array([1.0, 0.0])
    en = np.array([1.0 - 0.1, np.sqrt(1 - (1 - 0.1) ** 2)])
    alpha = float(((ea - en) ** 2).sum())
    assert triplet_loss(ea, ea.copy(), en, alpha) == 0.0


def test_loss_all_equal_gives_alpha():
    e = np.array([0.6, 0.8])
    assert triplet_loss(e, e, e, 0.2) == pytest.approx(0.2)


def test_loss_hand_computed_case_hinges_to_zero():
    ea, ep, en = np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([-1.0, 0.0])
    # raw = 2 - 4 + 0.2 = -1.8 -> hinged to 0
    assert triplet_loss(ea, ep, en, 0.2) == 0.0


def test_loss_length_mismatch():
    with pytest.raises(ValueError):
        triplet_loss(np.ones(3), np.ones(3), np.ones(4), 0.2)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_loss_bounds_for_unit_vectors(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 11))
    ea, ep, en = (v / np.linalg.norm(v) for v in rng.normal(size=(3, d)))
    alpha = float(rng.uniform(0, 1))
    loss = triplet_loss(ea, ep, en, alpha)
    assert 0.0 <= loss <= alpha + 4.0 + 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_loss_zero_when_margin_satisfied(seed):
    rng = np.random.default_rng(seed)
    ea, ep = (v / np.linalg.norm(v) for v in rng.normal(size=(2, 4)))
    alpha = 0.3
    dp = float(((ea - ep) ** 2).sum())
    en = -ea  # farthest point on the sphere: dn = 4
    if dp + alpha <= 4.0:
        assert triplet_loss(ea, ep, en, alpha) == 0.0


# --- training step ----------------------------------------------------------

def fixed_batch(side, rng, n=4):
    batch = []
    for _ in range(n):
        batch.append(Triplet(anchor=rand_image(side, rng),
                             positive=rand_image(side, rng),
                             negative=rand_image(side, rng),
                             anchor_rp=0, negative_rp=1))
    return batch


def test_train_step_inactive_hinge_leaves_params():
    rng = np.random.default_rng(7)
    model = small_model(margin_alpha=0.0)
    # alpha=0: a triplet with identical anchor/positive has raw = -dn <= 0
    img = rand_image(4, rng)
    other = rand_image(4, rng)
    batch = [Triplet(anchor=img, positive=img, negative=other,
                     anchor_rp=0, negative_rp=1)]
    before = {k: v.copy() for k, v in model.params.items()}
    _, _, loss = train_step(model, batch, AdamState(), np.random.default_rng(8))
    assert loss == 0.0
    for name in before:
        np.testing.assert_array_equal(model.params[name], before[name])


def test_train_step_deterministic():
    results = []
    for _ in range(2):
        rng = np.random.default_rng(9)
        model = small_model(seed=1, dropout_rate=0.25, noise_sigma=0.1)
        opt = AdamState()
        step_rng = np.random.default_rng(10)
        for _ in range(5):
            batch = fixed_batch(4, rng)
            model, opt, _ = train_step(model, batch, opt, step_rng)
        results.append(model)
    for name in results[0].params:
        np.testing.assert_array_equal(results[0].params[name],
                                      results[1].params[name])


def test_train_step_reduces_loss_on_repeated_batch():
    rng = np.random.default_rng(11)
    model = small_model(seed=2)
    batch = fixed_batch(4, rng, n=8)
    opt = AdamState(lr=1e-2)
    step_rng = np.random.default_rng(12)
    first = None
    for _ in range(60):
        model, opt, loss = train_step(model, batch, opt, step_rng)
        if first is None:
            first = loss
    assert loss < first


def test_train_step_rejects_empty_batch():
    model = small_model()
    with pytest.raises(ValueError, match="empty"):
        train_step(model, [], AdamState(), np.random.default_rng(0))


# --- gradient check ---------------------------------------------------------

def test_gradient_check_small_models():
    for seed in range(3):
        err = run_gradcheck(seed=seed, side=4, embed_dim=3)
        assert err <= 1e-4


def test_gradient_check_various_sides():
    for side in (3, 5):
        err = run_gradcheck(seed=1, side=side, embed_dim=3)
        assert err <= 1e-4


def test_gradient_check_refuses_stochastic_model():
    rng = np.random.default_rng(13)
    model = small_model(dropout_rate=0.25)
    t = random_check_triplet(4, rng)
    with pytest.raises(StochasticModelError):
        gradient_check(model, t, 0.2)
    model2 = small_model(noise_sigma=0.1)
    with pytest.raises(StochasticModelError):
        gradient_check(model2, t, 0.2)


def test_gradient_check_reports_inactive_hinge():
    rng = np.random.default_rng(14)
    model = small_model()
    img = rand_image(4, rng)
    other = rand_image(4, rng)
    # identical anchor/positive with alpha=0 keeps the hinge inactive
    t = Triplet(anchor=img, positive=img, negative=other,
                anchor_rp=0, negative_rp=1)
    with pytest.raises(HingeInactiveError):
        gradient_check(model, t, 0.0)
