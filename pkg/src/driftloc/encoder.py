"""Convolutional Siamese encoder with triplet loss.

A single parameter set embeds fingerprint images onto the d-dimensional
unit sphere: noise (train only) -> conv 2x2 -> ReLU -> dropout -> conv
2x2 -> ReLU -> dropout -> flatten -> FC -> ReLU -> FC(d) -> L2
normalization.  The three triplet branches are forwards through the same
weights, so weight sharing holds by construction.

Training math is float64; gradients are verifiable against central
finite differences via :func:`gradient_check`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .augment import noise_flat
from .errors import HingeInactiveError, NonFiniteLossError, StochasticModelError
from .preprocess import FingerprintImage
from .sampler import Triplet

PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
               "fc1_w", "fc1_b", "fc2_w", "fc2_b")


@dataclass(frozen=True)
class EncoderConfig:
    conv1_filters: int = 64
    conv2_filters: int = 128
    filter_size: int = 2
    stride: int = 1
    fc_units: int = 100
    embed_dim: int = 5
    dropout_rate: float = 0.25
    margin_alpha: float = 0.2
    noise_sigma: float = 0.10

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.margin_alpha < 0.0:
            raise ValueError("margin_alpha must be >= 0")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.filter_size < 1 or self.conv1_filters < 1 or self.conv2_filters < 1:
            raise ValueError("filter counts and filter_size must be >= 1")
        if self.fc_units < 1:
            raise ValueError("fc_units must be >= 1")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")


def min_input_side(cfg: EncoderConfig) -> int:
    """Smallest image side the two valid convolutions can consume."""
    return 2 * (cfg.filter_size - 1) + 1


def _param_shapes(cfg: EncoderConfig, input_side: int) -> dict[str, tuple[int, ...]]:
    k = cfg.filter_size
    side2 = input_side - 2 * (k - 1)
    flat = cfg.conv2_filters * side2 * side2
    return {
        "conv1_w": (cfg.conv1_filters, 1, k, k),
        "conv1_b": (cfg.conv1_filters,),
        "conv2_w": (cfg.conv2_filters, cfg.conv1_filters, k, k),
        "conv2_b": (cfg.conv2_filters,),
        "fc1_w": (flat, cfg.fc_units),
        "fc1_b": (cfg.fc_units,),
        "fc2_w": (cfg.fc_units, cfg.embed_dim),
        "fc2_b": (cfg.embed_dim,),
    }


@dataclass(eq=False)
class EncoderModel:
    """Configuration plus the parameter tensors of a trained or fresh
    encoder.  ``params`` is mutated in place by training."""

    config: EncoderConfig
    input_side: int
    params: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = _param_shapes(self.config, self.input_side)
        for name in PARAM_ORDER:
            if name not in self.params:
                raise ValueError(f"missing parameter {name}")
            got = self.params[name].shape
            if got != shapes[name]:
                raise ValueError(f"parameter {name}: shape {got} != expected {shapes[name]}")
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"parameter {name} contains non-finite values")

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.config, self.input_side,
                            {k: v.copy() for k, v in self.params.items()})


def init_model(cfg: EncoderConfig, input_side: int, seed: int) -> EncoderModel:
    """Fresh parameters: He-style fan-in-scaled uniform weights, zero
    biases; deterministic per seed."""
    if input_side < min_input_side(cfg):
        raise ValueError(
            f"input side {input_side} too small: two {cfg.filter_size}x{cfg.filter_size} "
            f"valid convolutions need side >= {min_input_side(cfg)}"
        )
    rng = np.random.default_rng(seed)
    shapes = _param_shapes(cfg, input_side)
    fan_in = {
        "conv1_w": cfg.filter_size ** 2,
        "conv2_w": cfg.filter_size ** 2 * cfg.conv1_filters,
        "fc1_w": shapes["fc1_w"][0],
        "fc2_w": cfg.fc_units,
    }
    params: dict[str, np.ndarray] = {}
    for name in PARAM_ORDER:
        if name.endswith("_b"):
            params[name] = np.zeros(shapes[name], dtype=np.float64)
        else:
            limit = np.sqrt(6.0 / fan_in[name])
            params[name] = rng.uniform(-limit, limit, size=shapes[name])
    return EncoderModel(config=cfg, input_side=input_side, params=params)


def _forward(model: EncoderModel, x: np.ndarray, train: bool,
             rng: np.random.Generator | None):
    """x: (N, 1, s, s) -> unit embeddings (N, d) plus backward caches."""
    p = model.params
    rate = model.config.dropout_rate if train else 0.0
    h1, c_conv1 = nn.conv2d_forward(x, p["conv1_w"], p["conv1_b"])
    a1, c_relu1 = nn.relu_forward(h1)
    d1, c_drop1 = nn.dropout_forward(a1, rate, rng) if rate > 0 else (a1, None)
    h2, c_conv2 = nn.conv2d_forward(d1, p["conv2_w"], p["conv2_b"])
    a2, c_relu2 = nn.relu_forward(h2)
    d2, c_drop2 = nn.dropout_forward(a2, rate, rng) if rate > 0 else (a2, None)
    flat = d2.reshape(d2.shape[0], -1)
    h3, c_fc1 = nn.dense_forward(flat, p["fc1_w"], p["fc1_b"])
    a3, c_relu3 = nn.relu_forward(h3)
    z, c_fc2 = nn.dense_forward(a3, p["fc2_w"], p["fc2_b"])
    e, c_norm = nn.l2norm_forward(z)
    caches = (c_conv1, c_relu1, c_drop1, c_conv2, c_relu2, c_drop2,
              d2.shape, c_fc1, c_relu3, c_fc2, c_norm)
    return e, caches


def _backward(caches, ge: np.ndarray) -> dict[str, np.ndarray]:
    (c_conv1, c_relu1, c_drop1, c_conv2, c_relu2, c_drop2,
     conv2_out_shape, c_fc1, c_relu3, c_fc2, c_norm) = caches
    gz = nn.l2norm_backward(c_norm, ge)
    ga3, g_fc2_w, g_fc2_b = nn.dense_backward(c_fc2, gz)
    gh3 = nn.relu_backward(c_relu3, ga3)
    gflat, g_fc1_w, g_fc1_b = nn.dense_backward(c_fc1, gh3)
    gd2 = gflat.reshape(conv2_out_shape)
    ga2 = nn.dropout_backward(c_drop2, gd2)
    gh2 = nn.relu_backward(c_relu2, ga2)
    gd1, g_conv2_w, g_conv2_b = nn.conv2d_backward(c_conv2, gh2)
    ga1 = nn.dropout_backward(c_drop1, gd1)
    gh1 = nn.relu_backward(c_relu1, ga1)
    _, g_conv1_w, g_conv1_b = nn.conv2d_backward(c_conv1, gh1)
    return {
        "conv1_w": g_conv1_w, "conv1_b": g_conv1_b,
        "conv2_w": g_conv2_w, "conv2_b": g_conv2_b,
        "fc1_w": g_fc1_w, "fc1_b": g_fc1_b,
        "fc2_w": g_fc2_w, "fc2_b": g_fc2_b,
    }


def _check_images(model: EncoderModel, images: Sequence[FingerprintImage]) -> int:
    n_real = images[0].n_real
    for img in images:
        if img.side != model.input_side:
            raise ValueError(
                f"image side {img.side} does not match model input side {model.input_side}"
            )
        if img.n_real != n_real:
            raise ValueError("images disagree on n_real; mixed registries?")
    return n_real


def encode_batch(model: EncoderModel, images: Sequence[FingerprintImage],
                 mode: str = "infer",
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Embed a batch of images; rows have unit Euclidean norm.

    Train mode adds Gaussian input noise to the real-AP pixels and applies
    dropout, both driven by ``rng``.  Inference is deterministic and
    rejects a generator argument.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("train-mode encoding requires a generator")
    if not train and rng is not None:
        raise ValueError("inference is deterministic; no generator allowed")
    if len(images) == 0:
        raise ValueError("empty image batch")
    n_real = _check_images(model, images)
    s = model.input_side
    flats = np.stack([img.flat for img in images])
    if train and model.config.noise_sigma > 0.0:
        flats = noise_flat(flats, n_real, model.config.noise_sigma, rng)
    x = flats.reshape(len(images), 1, s, s)
    e, _ = _forward(model, x, train, rng)
    return e


def encode(model: EncoderModel, img: FingerprintImage, mode: str = "infer",
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Embed one image as a d-dimensional unit vector."""
    return encode_batch(model, [img], mode, rng)[0]


def triplet_loss(ea: np.ndarray, ep: np.ndarray, en: np.ndarray, alpha: float) -> float:
    """Hinged triplet loss max(0, ||ea-ep||^2 - ||ea-en||^2 + alpha)."""
    ea, ep, en = (np.asarray(v, dtype=np.float64) for v in (ea, ep, en))
    if not (ea.shape == ep.shape == en.shape) or ea.ndim != 1:
        raise ValueError(f"embedding shapes differ: {ea.shape}, {ep.shape}, {en.shape}")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    raw = float(((ea - ep) ** 2).sum() - ((ea - en) ** 2).sum() + alpha)
    return max(0.0, raw)


def _batch_losses(ea: np.ndarray, ep: np.ndarray, en: np.ndarray, alpha: float):
    dp = ((ea - ep) ** 2).sum(axis=1)
    dn = ((ea - en) ** 2).sum(axis=1)
    raw = dp - dn + alpha
    return raw, np.maximum(raw, 0.0)


def train_step(model: EncoderModel, batch: Sequence[Triplet],
               opt_state: nn.AdamState,
               rng: np.random.Generator) -> tuple[EncoderModel, nn.AdamState, float]:
    """One optimization step over a batch of triplets.

    All three branches run through the shared parameters in a single
    stacked forward pass.  Gradient flows only through triplets whose
    hinge is active; a batch with no active hinge leaves the parameters
    untouched.  The reported mean loss is pre-update.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    b = len(batch)
    images = [t.anchor for t in batch] + [t.positive for t in batch] + [t.negative for t in batch]
    n_real = _check_images(model, images)
    s = model.input_side
    cfg = model.config

    flats = np.stack([img.flat for img in images])
    if cfg.noise_sigma > 0.0:
        flats = noise_flat(flats, n_real, cfg.noise_sigma, rng)
    x = flats.reshape(3 * b, 1, s, s)
    e, caches = _forward(model, x, train=True, rng=rng)
    ea, ep, en = e[:b], e[b:2 * b], e[2 * b:]

    raw, losses = _batch_losses(ea, ep, en, cfg.margin_alpha)
    mean_loss = float(losses.mean())
    if not np.isfinite(mean_loss):
        raise NonFiniteLossError(
            f"non-finite batch loss {mean_loss}; raw losses: {raw.tolist()}"
        )

    active = (raw > 0.0)[:, None].astype(np.float64)
    if not active.any():
        return model, opt_state, mean_loss

    scale = active / b
    ge = np.concatenate([
        2.0 * (en - ep) * scale,
        -2.0 * (ea - ep) * scale,
        2.0 * (ea - en) * scale,
    ])
    grads = _backward(caches, ge)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(f"non-finite gradient in {name}")
    nn.adam_update(model.params, grads, opt_state)
    return model, opt_state, mean_loss


def _triplet_loss_forward(model: EncoderModel, x: np.ndarray, alpha: float):
    """Deterministic single-triplet loss used by the gradient check.
    x stacks the three images as (3, 1, s, s)."""
    e, caches = _forward(model, x, train=False, rng=None)
    raw, _ = _batch_losses(e[0:1], e[1:2], e[2:3], alpha)
    return float(raw[0]), e, caches


def gradient_check(model: EncoderModel, triplet: Triplet, alpha: float,
                   step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences
    over every parameter entry of the full triplet loss.

    Requires a deterministic model (dropout and input noise disabled) and
    an active hinge; both are reported distinctly otherwise.
    """
    cfg = model.config
    if cfg.dropout_rate > 0.0 or cfg.noise_sigma > 0.0:
        raise StochasticModelError(
            "gradient check needs dropout_rate=0 and noise_sigma=0; "
            "stochastic layers invalidate finite differences"
        )
    images = [triplet.anchor, triplet.positive, triplet.negative]
    _check_images(model, images)
    s = model.input_side
    x = np.stack([img.flat for img in images]).reshape(3, 1, s, s)

    raw, e, caches = _triplet_loss_forward(model, x, alpha)
    if raw <= 0.0:
        raise HingeInactiveError(
            f"raw loss {raw:.6g} <= 0: the hinge is inactive and the check is vacuous"
        )
    ea, ep, en = e[0], e[1], e[2]
    ge = np.stack([2.0 * (en - ep), -2.0 * (ea - ep), 2.0 * (ea - en)])
    analytic = _backward(caches, ge)

    max_rel = 0.0
    for name in PARAM_ORDER:
        p = model.params[name]
        a = analytic[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lo_hi, _, _ = _triplet_loss_forward(model, x, alpha)
            flat[i] = orig - step
            lo_lo, _, _ = _triplet_loss_forward(model, x, alpha)
            flat[i] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * step)
            ai = a.reshape(-1)[i]
            # guard keeps finite-difference noise on near-zero entries from
            # masquerading as relative error
            rel = abs(ai - numeric) / max(abs(ai), abs(numeric), 1e-5)
            if rel > max_rel:
                max_rel = rel
    return max_rel


def small_check_config(embed_dim: int = 3) -> EncoderConfig:
    """A deterministic, finite-difference-friendly encoder: tiny filter
    counts, no dropout, no input noise."""
    return EncoderConfig(conv1_filters=6, conv2_filters=8, fc_units=16,
                         embed_dim=embed_dim, dropout_rate=0.0, noise_sigma=0.0)
