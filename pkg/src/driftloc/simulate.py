"""Synthetic longitudinal fingerprint scenarios.

Reference points sit on a grid; access points land uniformly at random.
Received power follows log-distance path loss with additive Gaussian
shadowing:

    rssi = tx_power_dbm - 10 * path_loss_exponent * log10(max(d, 1))
           + per-CI AP bias + per-scan noise

clamped to [-100, 0] and rounded to integer dBm.  The per-CI bias has
two parts: a transient component redrawn independently every CI
(hourly_sigma_db; the session-to-session variation of human activity and
interference) and a random walk (zero at the first CI, steps of std
drift_sigma_db) that wanders gradually away from the surveyed state.
The removal schedule turns whole APs off (cumulatively) from a given
collection instance onward, emitting the -100 sentinel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (FingerprintDataset, Fingerprint, FloorPlan, ReferencePoint,
                   save_dataset)


@dataclass(frozen=True)
class SimConfig:
    width: float
    height: float
    rp_spacing: float
    n_aps: int
    n_cis: int
    fpr: int
    tx_power_dbm: float = -40.0
    path_loss_exponent: float = 3.0
    shadow_sigma_db: float = 2.0
    drift_sigma_db: float = 1.0
    hourly_sigma_db: float = 0.0
    removal_schedule: dict[int, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.rp_spacing <= 0:
            raise ValueError("extents and rp_spacing must be positive")
        if self.n_aps < 1 or self.n_cis < 1 or self.fpr < 1:
            raise ValueError("n_aps, n_cis and fpr must be >= 1")
        if not 1.5 <= self.path_loss_exponent <= 6.0:
            raise ValueError("path_loss_exponent must lie in [1.5, 6]")
        if min(self.shadow_sigma_db, self.drift_sigma_db, self.hourly_sigma_db) < 0:
            raise ValueError("noise std-devs must be >= 0")
        prev = 0.0
        for ci in sorted(self.removal_schedule):
            frac = self.removal_schedule[ci]
            if not 0 <= ci < self.n_cis:
                raise ValueError(f"removal schedule ci {ci} outside [0, {self.n_cis})")
            if not 0.0 <= frac <= 1.0:
                raise ValueError("removal fractions must lie in [0, 1]")
            if frac < prev:
                raise ValueError("removal fractions must be non-decreasing over ci")
            prev = frac


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """What the simulator actually did: AP placement, removal times, and
    the per-CI per-AP bias values (absolute, not increments)."""

    ap_positions: np.ndarray          # (n_aps, 2) meters
    removed_sets: tuple[frozenset[int], ...]  # per CI, AP indices silenced
    biases: np.ndarray                # (n_cis, n_aps) dB

    def removed_at(self, ap: int) -> int | None:
        """First CI at which an AP is silenced, or None if it never is."""
        for ci, removed in enumerate(self.removed_sets):
            if ap in removed:
                return ci
        return None


def _grid_coords(extent: float, spacing: float) -> np.ndarray:
    n = int(extent / spacing) + 1
    return np.arange(n, dtype=np.float64) * spacing


def generate(cfg: SimConfig) -> tuple[FingerprintDataset, GroundTruth]:
    """Build a full longitudinal dataset plus its ground truth, seeded."""
    xs = _grid_coords(cfg.width, cfg.rp_spacing)
    ys = _grid_coords(cfg.height, cfg.rp_spacing)
    rps = []
    rp_id = 0
    for y in ys:
        for x in xs:
            rps.append(ReferencePoint(rp_id=rp_id, x=float(x), y=float(y)))
            rp_id += 1
    if len(rps) < 2:
        raise ValueError(
            f"grid {cfg.width}x{cfg.height} at spacing {cfg.rp_spacing} places "
            f"{len(rps)} RPs; need at least 2"
        )

    rng = np.random.default_rng(cfg.seed)
    ap_pos = np.column_stack([
        rng.uniform(0.0, cfg.width, size=cfg.n_aps),
        rng.uniform(0.0, cfg.height, size=cfg.n_aps),
    ])
    registry = tuple(f"{i:03d}" for i in range(cfg.n_aps))
    floorplan = FloorPlan(rps=tuple(rps), ap_registry=registry)

    # Removal order is one fixed permutation; cumulative fractions then map
    # to nested prefixes, so an AP once removed stays removed.
    removal_order = rng.permutation(cfg.n_aps)
    removed_sets = []
    current = 0
    for ci in range(cfg.n_cis):
        if ci in cfg.removal_schedule:
            current = int(round(cfg.removal_schedule[ci] * cfg.n_aps))
        removed_sets.append(frozenset(int(a) for a in removal_order[:current]))

    # per-CI bias: session transient plus a gradual walk away from the
    # surveyed (first-CI) state
    biases = np.zeros((cfg.n_cis, cfg.n_aps))
    if cfg.drift_sigma_db > 0 and cfg.n_cis > 1:
        steps = rng.normal(0.0, cfg.drift_sigma_db, size=(cfg.n_cis - 1, cfg.n_aps))
        biases[1:] = np.cumsum(steps, axis=0)
    if cfg.hourly_sigma_db > 0 and cfg.n_cis > 1:
        biases[1:] += rng.normal(0.0, cfg.hourly_sigma_db,
                                 size=(cfg.n_cis - 1, cfg.n_aps))

    pos = floorplan.positions()
    d = np.sqrt(((pos[:, None, :] - ap_pos[None, :, :]) ** 2).sum(axis=2))
    base = cfg.tx_power_dbm - 10.0 * cfg.path_loss_exponent * np.log10(np.maximum(d, 1.0))

    fingerprints = []
    for ci in range(cfg.n_cis):
        level = np.repeat((base + biases[ci])[None, :, :], cfg.fpr, axis=0)
        if cfg.shadow_sigma_db > 0:
            level += rng.normal(0.0, cfg.shadow_sigma_db, size=level.shape)
        scans = np.rint(np.clip(level, -100.0, 0.0))
        dead = np.array([ap in removed_sets[ci] for ap in range(cfg.n_aps)])
        scans[:, :, dead] = -100.0
        for r, rp in enumerate(rps):
            for s in range(cfg.fpr):
                fingerprints.append(Fingerprint(rp_id=rp.rp_id, ci=ci, rssi=scans[s, r]))

    dataset = FingerprintDataset(floorplan=floorplan, fingerprints=tuple(fingerprints))
    truth = GroundTruth(ap_positions=ap_pos, removed_sets=tuple(removed_sets),
                        biases=biases)
    return dataset, truth


def preset(name: str, seed: int = 0) -> SimConfig:
    """Named desk-scale scenarios.

    office-like: a 48 m corridor surveyed every meter, 16 CIs with 6
    fingerprints per RP, and 20% of APs silenced from CI 11 onward.
    uji-like: an open-area RP grid over 15 periods, 9 fingerprints per
    RP, and a 50% AP loss at period 11.

    Both use strong path loss (each RP hears a local AP neighborhood, as
    in real buildings) and a busy radio environment: heavy per-scan
    shadowing plus session-to-session transients on top of a slow walk.
    """
    if name == "office-like":
        return SimConfig(width=48.0, height=0.5, rp_spacing=1.0, n_aps=50,
                         n_cis=16, fpr=6, tx_power_dbm=-30.0,
                         path_loss_exponent=5.0, shadow_sigma_db=4.0,
                         drift_sigma_db=1.0, hourly_sigma_db=5.0,
                         removal_schedule={11: 0.20}, seed=seed)
    if name == "uji-like":
        return SimConfig(width=24.0, height=24.0, rp_spacing=3.0, n_aps=64,
                         n_cis=15, fpr=9, tx_power_dbm=-30.0,
                         path_loss_exponent=5.0, shadow_sigma_db=3.0,
                         drift_sigma_db=1.5, hourly_sigma_db=3.5,
                         removal_schedule={11: 0.50}, seed=seed)
    raise ValueError(f"unknown preset {name!r} (have: office-like, uji-like)")


def write_scenario(dataset: FingerprintDataset, truth: GroundTruth,
                   out_dir: str | Path) -> dict[str, Path]:
    """Write floorplan.csv, fingerprints.csv and ground_truth.csv.

    The ground-truth schema is ``ap_id,x_m,y_m,removed_at_ci`` with -1
    for APs that are never removed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "floorplan": out / "floorplan.csv",
        "fingerprints": out / "fingerprints.csv",
        "ground_truth": out / "ground_truth.csv",
    }
    save_dataset(dataset, paths["floorplan"], paths["fingerprints"])
    with open(paths["ground_truth"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ap_id", "x_m", "y_m", "removed_at_ci"])
        for i, ap in enumerate(dataset.floorplan.ap_registry):
            removed = truth.removed_at(i)
            writer.writerow([ap, repr(float(truth.ap_positions[i, 0])),
                             repr(float(truth.ap_positions[i, 1])),
                             -1 if removed is None else removed])
    return paths
