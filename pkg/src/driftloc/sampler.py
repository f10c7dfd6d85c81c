"""Floorplan-aware triplet selection.

Hard negatives come from reference points that are physically close to the
anchor: the probability of picking RP_i as the negative for anchor RP_a is
proportional to a bivariate Gaussian kernel exp(-||pos_i - pos_a||^2 /
(2 sigma_sel^2)), with the anchor's own probability forced to zero and the
rest renormalized.  Positives are drawn uniformly from the anchor's RP;
with a single fingerprint at that RP the anchor is reused (augmentation
still differentiates the pair).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, apply_ap_dropout, draw_turnoff_fraction
from .data import FingerprintDataset, FloorPlan
from .preprocess import FingerprintImage, to_image


@dataclass(frozen=True)
class NegativePmf:
    """Sampling distribution over negative RPs for one anchor."""

    anchor_rp: int
    rp_ids: tuple[int, ...]   # floorplan order
    probs: np.ndarray         # aligned to rp_ids; anchor entry is 0

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.shape != (len(self.rp_ids),):
            raise ValueError("probs length must match rp_ids")
        if np.any(arr < 0.0):
            raise ValueError("probabilities must be non-negative")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        i = self.rp_ids.index(self.anchor_rp)
        if arr[i] != 0.0:
            raise ValueError("anchor probability must be exactly 0")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def prob_of(self, rp_id: int) -> float:
        return float(self.probs[self.rp_ids.index(rp_id)])

    def as_dict(self) -> dict[int, float]:
        return {rp: float(p) for rp, p in zip(self.rp_ids, self.probs)}


@dataclass(frozen=True, eq=False)
class Triplet:
    """Anchor/positive share an RP; the negative comes from another RP."""

    anchor: FingerprintImage
    positive: FingerprintImage
    negative: FingerprintImage
    anchor_rp: int
    negative_rp: int

    def __post_init__(self):
        if self.anchor_rp == self.negative_rp:
            raise ValueError("negative must come from a different RP than the anchor")


def default_sigma_sel(fp: FloorPlan) -> float:
    """Selection bandwidth scaled to the floorplan: 0.1 x the bounding-box
    diagonal of the RP coordinates."""
    diag = fp.bounding_box_diagonal()
    if diag <= 0.0:
        raise ValueError("floorplan RPs are co-located; sigma_sel has no scale")
    return 0.1 * diag


def negative_pmf(fp: FloorPlan, anchor: int, sigma_sel: float) -> NegativePmf:
    """Gaussian-kernel distribution over negative RPs for one anchor."""
    if sigma_sel <= 0.0:
        raise ValueError("sigma_sel must be > 0")
    rp_ids = tuple(rp.rp_id for rp in fp.rps)
    if anchor not in rp_ids:
        raise ValueError(f"anchor rp_id {anchor} not in floorplan")
    if len(rp_ids) < 2:
        raise ValueError("floorplan with a single RP has no valid negatives")
    pos = fp.positions()
    a = pos[rp_ids.index(anchor)]
    sq = ((pos - a) ** 2).sum(axis=1)
    w = np.exp(-sq / (2.0 * sigma_sel * sigma_sel))
    w[rp_ids.index(anchor)] = 0.0
    total = w.sum()
    if total <= 0.0:
        raise ValueError("negative kernel underflowed to zero; increase sigma_sel")
    return NegativePmf(anchor_rp=anchor, rp_ids=rp_ids, probs=w / total)


def build_pmf_table(fp: FloorPlan, sigma_sel: float | None = None) -> dict[int, NegativePmf]:
    """One NegativePmf per anchor RP.  The table is immutable and may be
    shared across sampling workers."""
    if sigma_sel is None:
        sigma_sel = default_sigma_sel(fp)
    return {rp.rp_id: negative_pmf(fp, rp.rp_id, sigma_sel) for rp in fp.rps}


def sample_triplet(train: FingerprintDataset, pmfs: dict[int, NegativePmf],
                   rng: np.random.Generator) -> Triplet:
    """Draw one (anchor, positive, negative) triplet.

    Anchor RP uniform over RPs; fingerprints uniform within their RP; the
    negative RP follows the anchor's pmf.  The positive is distinct from
    the anchor fingerprint whenever the RP has more than one.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    per_rp = train.by_rp()
    empty = sorted(rp for rp, idxs in per_rp.items() if not idxs)
    if empty:
        raise ValueError(f"RPs {empty} have no training fingerprints")

    rp_ids = [rp.rp_id for rp in train.floorplan.rps]
    anchor_rp = rp_ids[rng.integers(len(rp_ids))]
    pmf = pmfs[anchor_rp]

    own = per_rp[anchor_rp]
    a_idx = own[rng.integers(len(own))]
    if len(own) >= 2:
        others = [i for i in own if i != a_idx]
        p_idx = others[rng.integers(len(others))]
    else:
        p_idx = a_idx  # single-fingerprint RP: reuse the anchor

    neg_rp = int(rng.choice(len(pmf.rp_ids), p=pmf.probs))
    neg_rp = pmf.rp_ids[neg_rp]
    neg_own = per_rp[neg_rp]
    n_idx = neg_own[rng.integers(len(neg_own))]

    fps = train.fingerprints
    return Triplet(
        anchor=to_image(fps[a_idx]),
        positive=to_image(fps[p_idx]),
        negative=to_image(fps[n_idx]),
        anchor_rp=anchor_rp,
        negative_rp=neg_rp,
    )


def make_batch(train: FingerprintDataset, fp: FloorPlan, batch_size: int,
               aug: AugmentConfig, rng: np.random.Generator,
               pmfs: dict[int, NegativePmf] | None = None,
               sigma_sel: float | None = None) -> list[Triplet]:
    """Sample a batch of triplets and apply AP dropout to each image.

    Every image draws its own turn-off fraction.  Gaussian input noise is
    not applied here; it belongs to the encoder's train-mode input stage.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if fp.ap_registry != train.floorplan.ap_registry:
        raise ValueError("floorplan registry does not match the training set")
    if pmfs is None:
        pmfs = build_pmf_table(fp, sigma_sel)

    batch = []
    for _ in range(batch_size):
        t = sample_triplet(train, pmfs, rng)
        if aug.p_upper > 0.0:
            imgs = []
            for img in (t.anchor, t.positive, t.negative):
                frac = draw_turnoff_fraction(aug, rng)
                imgs.append(apply_ap_dropout(img, frac, rng))
            t = Triplet(anchor=imgs[0], positive=imgs[1], negative=imgs[2],
                        anchor_rp=t.anchor_rp, negative_rp=t.negative_rp)
        batch.append(t)
    return batch
