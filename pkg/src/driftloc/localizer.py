"""End-to-end pipeline: train the encoder, build the embedding index,
and answer online queries.

The index is a flat exhaustive-scan table; KNN is exact.  Neighbor order
is total: ascending distance, then ascending rp_id, then ascending entry
position.  The default decision rule is majority RP vote with ties broken
by smallest mean neighbor distance and finally lowest rp_id; the
alternative rule interpolates an inverse-distance-weighted centroid of
the neighbor coordinates (the reported rp_id still follows the vote).

Models are finalized at float32 parameter precision when training ends,
so persisting and reloading a model reproduces its predictions exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .augment import AugmentConfig
from .data import Fingerprint, FingerprintDataset
from .encoder import EncoderConfig, EncoderModel, encode_batch, init_model, train_step
from .nn import AdamState
from .preprocess import image_side, to_image
from .sampler import build_pmf_table, default_sigma_sel, make_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Everything the offline phase needs besides the data and the seed."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    sigma_sel: float | None = None  # None -> 0.1 x floorplan bbox diagonal
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.sigma_sel is not None and self.sigma_sel <= 0.0:
            raise ValueError("sigma_sel must be > 0")


@dataclass(frozen=True, eq=False)
class EmbeddingIndex:
    """(embedding, rp_id, x, y) rows queried by exhaustive KNN.

    Stored at float32 precision so that serialization is lossless.
    """

    embeddings: np.ndarray  # (n, d) float32, unit rows
    rp_ids: np.ndarray      # (n,) int32
    xs: np.ndarray          # (n,) float32
    ys: np.ndarray          # (n,) float32

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        rp = np.asarray(self.rp_ids, dtype=np.int32)
        xs = np.asarray(self.xs, dtype=np.float32)
        ys = np.asarray(self.ys, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise ValueError("index must be a non-empty (n, d) table")
        n = emb.shape[0]
        if rp.shape != (n,) or xs.shape != (n,) or ys.shape != (n,):
            raise ValueError("index column lengths disagree")
        if not (np.all(np.isfinite(emb)) and np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("index contains non-finite values")
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise ValueError("index embeddings must be unit-norm")
        for arr, name in ((emb, "embeddings"), (rp, "rp_ids"), (xs, "xs"), (ys, "ys")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    def entries(self):
        """Iterate (embedding, rp_id, x, y) tuples."""
        for i in range(len(self)):
            yield (self.embeddings[i], int(self.rp_ids[i]),
                   float(self.xs[i]), float(self.ys[i]))


@dataclass(frozen=True)
class Prediction:
    x: float
    y: float
    rp_id: int
    neighbor_rps: tuple[tuple[int, float], ...]  # (rp_id, distance), consultation order


def train(train_set: FingerprintDataset, cfg: TrainConfig, seed: int,
          progress: Callable[[int, float], None] | None = None
          ) -> tuple[EncoderModel, EmbeddingIndex]:
    """Offline phase: preprocess, sample triplets, train the encoder, then
    embed every training fingerprint (inference mode, no augmentation)
    into the index.  Deterministic per seed."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    fp = train_set.floorplan
    side = image_side(fp.n_aps)

    ss = np.random.SeedSequence(seed)
    init_seed, sampler_seed, step_seed = (int(s) for s in ss.generate_state(3))
    model = init_model(cfg.encoder, side, init_seed)
    sampler_rng = np.random.default_rng(sampler_seed)
    step_rng = np.random.default_rng(step_seed)

    sigma_sel = cfg.sigma_sel if cfg.sigma_sel is not None else default_sigma_sel(fp)
    pmfs = build_pmf_table(fp, sigma_sel)
    opt = AdamState(lr=cfg.learning_rate)

    batches_per_epoch = max(1, math.ceil(len(train_set) / cfg.batch_size))
    for epoch in range(cfg.epochs):
        total = 0.0
        for _ in range(batches_per_epoch):
            batch = make_batch(train_set, fp, cfg.batch_size, cfg.augment,
                               sampler_rng, pmfs=pmfs)
            model, opt, loss = train_step(model, batch, opt, step_rng)
            total += loss
        mean = total / batches_per_epoch
        logger.debug("epoch %d/%d mean triplet loss %.5f", epoch + 1, cfg.epochs, mean)
        if progress is not None:
            progress(epoch, mean)

    # Finalize at serialized precision so save/load cannot change predictions.
    for name in model.params:
        model.params[name] = model.params[name].astype(np.float32).astype(np.float64)

    images = [to_image(f) for f in train_set.fingerprints]
    emb = encode_batch(model, images, mode="infer").astype(np.float32)
    rp_coord = {rp.rp_id: (rp.x, rp.y) for rp in fp.rps}
    rp_ids = np.array([f.rp_id for f in train_set.fingerprints], dtype=np.int32)
    xs = np.array([rp_coord[f.rp_id][0] for f in train_set.fingerprints], dtype=np.float32)
    ys = np.array([rp_coord[f.rp_id][1] for f in train_set.fingerprints], dtype=np.float32)
    index = EmbeddingIndex(embeddings=emb, rp_ids=rp_ids, xs=xs, ys=ys)
    return model, index


def _knn_decide(dists: np.ndarray, rp_ids: np.ndarray, xs: np.ndarray,
                ys: np.ndarray, k: int, rule: str) -> Prediction:
    """Shared decision core for embedding-space and raw-RSSI KNN."""
    n = dists.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds index size {n}")
    if rule not in ("vote", "centroid"):
        raise ValueError(f"unknown decision rule {rule!r}")

    order = np.lexsort((np.arange(n), rp_ids, dists))[:k]
    nb_rp = [int(rp_ids[i]) for i in order]
    nb_dist = [float(dists[i]) for i in order]
    nb_x = [float(xs[i]) for i in order]
    nb_y = [float(ys[i]) for i in order]

    votes: dict[int, int] = {}
    for rp in nb_rp:
        votes[rp] = votes.get(rp, 0) + 1
    best = max(votes.values())
    tied = [rp for rp, c in votes.items() if c == best]
    if len(tied) > 1:
        mean_d = {rp: sum(d for r, d in zip(nb_rp, nb_dist) if r == rp) / votes[rp]
                  for rp in tied}
        low = min(mean_d.values())
        tied = [rp for rp in tied if mean_d[rp] == low]
    winner = min(tied)

    if rule == "vote":
        i = nb_rp.index(winner)
        x, y = nb_x[i], nb_y[i]
    else:
        w = [1.0 / (d + 1e-9) for d in nb_dist]
        tot = sum(w)
        x = sum(wi * xi for wi, xi in zip(w, nb_x)) / tot
        y = sum(wi * yi for wi, yi in zip(w, nb_y)) / tot
    return Prediction(x=x, y=y, rp_id=winner,
                      neighbor_rps=tuple(zip(nb_rp, nb_dist)))


def predict(model: EncoderModel, index: EmbeddingIndex, scan: Fingerprint,
            k: int = 3, rule: str = "vote") -> Prediction:
    """Embed a scan (no noise, no dropout) and locate it by exact KNN over
    the index."""
    if model.config.embed_dim != index.embed_dim:
        raise ValueError("model and index disagree on embedding length")
    img = to_image(scan)
    q = encode_batch(model, [img], mode="infer")[0]
    diff = index.embeddings.astype(np.float64) - q
    dists = np.sqrt((diff * diff).sum(axis=1))
    return _knn_decide(dists, index.rp_ids, index.xs, index.ys, k, rule)


@dataclass(frozen=True, eq=False)
class BaselineIndex:
    """Normalized raw-RSSI vectors of a training set, for the
    encoder-free KNN baseline."""

    vectors: np.ndarray  # (n, n_aps) float64 in [0, 1]
    rp_ids: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]


def build_baseline_index(train_set: FingerprintDataset) -> BaselineIndex:
    if len(train_set) == 0:
        raise ValueError("empty training set")
    vecs = np.stack([np.clip((f.rssi + 100.0) / 100.0, 0.0, 1.0)
                     for f in train_set.fingerprints])
    rp_coord = {rp.rp_id: (rp.x, rp.y) for rp in train_set.floorplan.rps}
    rp_ids = np.array([f.rp_id for f in train_set.fingerprints], dtype=np.int64)
    xs = np.array([rp_coord[f.rp_id][0] for f in train_set.fingerprints])
    ys = np.array([rp_coord[f.rp_id][1] for f in train_set.fingerprints])
    return BaselineIndex(vectors=vecs, rp_ids=rp_ids, xs=xs, ys=ys)


def baseline_predict_with_index(bidx: BaselineIndex, scan: Fingerprint,
                                k: int = 3, rule: str = "vote") -> Prediction:
    if scan.rssi.size != bidx.vectors.shape[1]:
        raise ValueError("scan is not aligned to the training registry")
    q = np.clip((scan.rssi + 100.0) / 100.0, 0.0, 1.0)
    diff = bidx.vectors - q
    dists = np.sqrt((diff * diff).sum(axis=1))
    return _knn_decide(dists, bidx.rp_ids, bidx.xs, bidx.ys, k, rule)


def baseline_knn_predict(train_set: FingerprintDataset, scan: Fingerprint,
                         k: int = 3, rule: str = "vote") -> Prediction:
    """Encoder-free KNN on normalized RSSI vectors, same decision rule as
    :func:`predict`."""
    return baseline_predict_with_index(build_baseline_index(train_set), scan, k, rule)
