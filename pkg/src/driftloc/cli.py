"""Command-line surface.

Subcommands: simulate, train, eval, sweep-fpr, gradcheck, predict.
Every command exits 0 on success and nonzero with a message on stderr on
any error; all configuration is via flags.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import simulate as sim
from .augment import AugmentConfig
from .data import (Fingerprint, FingerprintDataset, FloorPlan, ReferencePoint,
                   load_dataset, load_fingerprints_csv, split_by_ci)
from .data import _load_floorplan_rows  # floorplan half of load_dataset
from .encoder import (EncoderConfig, encode, gradient_check, init_model,
                      small_check_config, triplet_loss)
from .errors import DatasetFormatError, DriftlocError
from .evaluate import (evaluate_baseline_over_time, evaluate_over_time,
                       fpr_sweep, write_report_csv, write_sweep_csv)
from .localizer import TrainConfig, predict, train
from .model_io import load_model_full, save_model
from .preprocess import FingerprintImage
from .sampler import Triplet

logger = logging.getLogger(__name__)

GRADCHECK_THRESHOLD = 1e-4


def _add_sim(sub):
    p = sub.add_parser("simulate", help="generate a synthetic drift scenario")
    p.add_argument("--preset", required=True, choices=["office-like", "uji-like"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="scenario", help="output directory")
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--rp-spacing", type=float)
    p.add_argument("--n-aps", type=int)
    p.add_argument("--n-cis", type=int)
    p.add_argument("--fpr", type=int)
    p.add_argument("--tx-power-dbm", type=float)
    p.add_argument("--path-loss-exponent", type=float)
    p.add_argument("--shadow-sigma-db", type=float)
    p.add_argument("--drift-sigma-db", type=float)
    p.add_argument("--removal", help="schedule as ci:frac[,ci:frac...]")


def _parse_removal(text: str) -> dict[int, float]:
    out = {}
    for part in text.split(","):
        ci, _, frac = part.partition(":")
        if not frac:
            raise ValueError(f"bad removal entry {part!r}, want ci:frac")
        out[int(ci)] = float(frac)
    return out


def _cmd_simulate(args) -> int:
    cfg = sim.preset(args.preset, seed=args.seed)
    overrides = {}
    for name in ("width", "height", "rp_spacing", "n_aps", "n_cis", "fpr",
                 "tx_power_dbm", "path_loss_exponent", "shadow_sigma_db",
                 "drift_sigma_db"):
        v = getattr(args, name)
        if v is not None:
            overrides[name] = v
    if args.removal is not None:
        overrides["removal_schedule"] = _parse_removal(args.removal)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    dataset, truth = sim.generate(cfg)
    paths = sim.write_scenario(dataset, truth, args.out)
    print(f"wrote {paths['floorplan']}, {paths['fingerprints']}, {paths['ground_truth']}")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="run the offline phase and save a model")
    p.add_argument("--floorplan", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--train-ci", type=int, default=0)
    p.add_argument("--fpr", type=int, default=6)
    p.add_argument("--embed-dim", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--p-upper", type=float, default=0.9)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--sigma-sel", default="auto",
                   help="meters, or 'auto' for 0.1 x floorplan diagonal")
    p.add_argument("--dropout-rate", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file path (.stne)")


def _registry_string(fp: FloorPlan) -> str:
    for ap in fp.ap_registry:
        if "," in ap or "=" in ap or "\n" in ap:
            raise ValueError(f"AP id {ap!r} contains characters reserved by the model file")
    return ",".join(fp.ap_registry)


def _train_config(args) -> TrainConfig:
    sigma_sel = None if args.sigma_sel == "auto" else float(args.sigma_sel)
    return TrainConfig(
        encoder=EncoderConfig(embed_dim=args.embed_dim, margin_alpha=args.alpha,
                              noise_sigma=args.noise_sigma,
                              dropout_rate=args.dropout_rate),
        augment=AugmentConfig(p_upper=args.p_upper, noise_sigma=args.noise_sigma),
        sigma_sel=sigma_sel,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
    )


def _cmd_train(args) -> int:
    dataset = load_dataset(args.floorplan, args.fingerprints)
    split_seed, train_seed = (
        int(s) for s in np.random.SeedSequence(args.seed).generate_state(2)
    )
    train_set, _ = split_by_ci(dataset, args.train_ci, args.fpr, split_seed)
    cfg = _train_config(args)
    logger.info("training on %d fingerprints across %d RPs",
                len(train_set), len(dataset.floorplan.rps))
    model, index = train(
        train_set, cfg, train_seed,
        progress=lambda e, m: logger.info("epoch %d: mean loss %.5f", e + 1, m),
    )
    extra = {
        "ap_registry": _registry_string(dataset.floorplan),
        "train_ci": str(args.train_ci),
        "fpr": str(args.fpr),
        "split_seed": str(split_seed),
        "cli_seed": str(args.seed),
    }
    save_model(model, index, args.out, extra=extra)
    print(f"saved model with {len(index)} index entries to {args.out}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="per-CI error report for a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--baseline", action="store_true",
                   help="also report the raw-RSSI KNN baseline")
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--floorplan", help="optional floorplan CSV; defaults to "
                                       "RP coordinates recovered from the model")
    p.add_argument("--rule", choices=["vote", "centroid"], default="vote")


def _floorplan_from_model(index, registry: tuple[str, ...]) -> FloorPlan:
    seen: dict[int, ReferencePoint] = {}
    for _, rp_id, x, y in index.entries():
        if rp_id not in seen:
            seen[rp_id] = ReferencePoint(rp_id=rp_id, x=x, y=y)
    return FloorPlan(rps=tuple(seen[r] for r in sorted(seen)), ap_registry=registry)


def _dataset_for_model(args, index, extra) -> FingerprintDataset:
    registry = tuple(extra.get("ap_registry", "").split(","))
    if registry == ("",):
        raise DriftlocError("model file lacks the AP registry; cannot align scans")
    if args.floorplan:
        floorplan = FloorPlan(rps=_load_floorplan_rows(Path(args.floorplan)),
                              ap_registry=registry)
    else:
        floorplan = _floorplan_from_model(index, registry)
    dataset = load_fingerprints_csv(args.fingerprints, floorplan.rps)
    if dataset.floorplan.ap_registry != floorplan.ap_registry:
        raise DriftlocError(
            "fingerprint CSV registry does not match the model's training registry"
        )
    return dataset


def _cmd_eval(args) -> int:
    model, index, extra = load_model_full(args.model)
    dataset = _dataset_for_model(args, index, extra)

    train_part = test_part = None
    if {"train_ci", "fpr", "split_seed"} <= extra.keys():
        train_ci = int(extra["train_ci"])
        if train_ci in dataset.cis():
            train_part, test_part = split_by_ci(
                dataset, train_ci, int(extra["fpr"]), int(extra["split_seed"])
            )
    if test_part is None:
        logger.info("training split not recoverable; evaluating all fingerprints")
        test_part = dataset
        if args.baseline:
            raise DriftlocError(
                "--baseline needs the training partition, which this dataset "
                "does not contain (training CI missing)"
            )

    reports = [evaluate_over_time(model, index, test_part, args.k, args.rule)]
    if args.baseline:
        reports.append(evaluate_baseline_over_time(train_part, test_part,
                                                   args.k, args.rule))
    write_report_csv(reports, args.report)
    for r in reports:
        print(f"{r.method_label}: overall mean error "
              f"{r.overall_mean_error:.3f} m over {sum(r.n_queries_per_ci.values())} queries")
    return 0


def _add_sweep(sub):
    p = sub.add_parser("sweep-fpr", help="sensitivity of error to fingerprints per RP")
    p.add_argument("--floorplan", required=True)
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--fprs", default="1,2,4,6", help="comma-separated FPR values")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--train-ci", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--embed-dim", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--p-upper", type=float, default=0.9)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--sigma-sel", default="auto")
    p.add_argument("--dropout-rate", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)


def _cmd_sweep(args) -> int:
    dataset = load_dataset(args.floorplan, args.fingerprints)
    fprs = [int(x) for x in args.fprs.split(",") if x]
    cfg = _train_config(args)
    result = fpr_sweep(dataset, fprs, cfg, repeats=args.repeats, seed=args.seed,
                       train_ci=args.train_ci, k=args.k)
    write_sweep_csv(result, args.report)
    for fpr in result.fprs:
        print(f"fpr={fpr}: overall mean error {result.overall[fpr]:.3f} m")
    return 0


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="verify backprop against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=3)


def random_check_triplet(side: int, rng: np.random.Generator) -> Triplet:
    imgs = [FingerprintImage(side, rng.random((side, side)), side * side)
            for _ in range(3)]
    return Triplet(anchor=imgs[0], positive=imgs[1], negative=imgs[2],
                   anchor_rp=0, negative_rp=1)


def run_gradcheck(seed: int, side: int = 4, embed_dim: int = 3) -> float:
    """Build a small deterministic encoder, find a hinge-active random
    triplet, and return the max relative gradient error."""
    cfg = small_check_config(embed_dim=embed_dim)
    model = init_model(cfg, side, seed)
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        t = random_check_triplet(side, rng)
        raw = (triplet_loss(encode(model, t.anchor), encode(model, t.positive),
                            encode(model, t.negative), cfg.margin_alpha))
        if raw > 1e-3:  # comfortably inside the active region
            return gradient_check(model, t, cfg.margin_alpha)
    raise DriftlocError("could not find a hinge-active triplet")


def _cmd_gradcheck(args) -> int:
    err = run_gradcheck(args.seed, args.side, args.embed_dim)
    print(f"max relative gradient error: {err:.3e}")
    if err > GRADCHECK_THRESHOLD:
        print(f"FAIL: exceeds {GRADCHECK_THRESHOLD:.0e}", file=sys.stderr)
        return 1
    return 0


def _add_predict(sub):
    p = sub.add_parser("predict", help="locate scans with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--scan", required=True, help="CSV of scans (ap_<id> columns)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--rule", choices=["vote", "centroid"], default="vote")


def load_scans(path: str | Path, registry: tuple[str, ...]) -> list[np.ndarray]:
    """Parse scan rows aligned by AP column name to a training registry.

    Registry APs absent from the file are filled with -100; columns for
    unknown APs are ignored (post-deployment networks grow).  Leading
    rp_id/ci columns are accepted and skipped.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty scan file") from None
        skip = 0
        while skip < len(header) and not header[skip].startswith("ap_"):
            if header[skip] not in ("rp_id", "ci"):
                raise DatasetFormatError(
                    f"{path}: unexpected column {header[skip]!r}", row=1)
            skip += 1
        col_ap = {}
        for j, col in enumerate(header[skip:], start=skip):
            if not col.startswith("ap_") or len(col) <= 3:
                raise DatasetFormatError(f"{path}: bad AP column {col!r}", row=1)
            col_ap[j] = col[3:]
        pos = {ap: i for i, ap in enumerate(registry)}
        scans = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            rssi = np.full(len(registry), -100.0)
            for j, ap in col_ap.items():
                if ap not in pos:
                    continue
                try:
                    v = float(cells[j])
                except (ValueError, IndexError):
                    raise DatasetFormatError(
                        f"bad rssi cell for ap_{ap}", row=lineno) from None
                if not -100.0 <= v <= 0.0:
                    raise DatasetFormatError(
                        f"rssi {v:g} out of [-100, 0] for ap_{ap}", row=lineno)
                rssi[pos[ap]] = v
            scans.append(rssi)
    if not scans:
        raise DatasetFormatError(f"{path}: no scan rows")
    return scans


def _cmd_predict(args) -> int:
    model, index, extra = load_model_full(args.model)
    registry = tuple(extra.get("ap_registry", "").split(","))
    if registry == ("",):
        raise DriftlocError("model file lacks the AP registry; cannot align scans")
    writer = csv.writer(sys.stdout)
    writer.writerow(["x_m", "y_m", "rp_id"])
    for rssi in load_scans(args.scan, registry):
        scan = Fingerprint(rp_id=int(index.rp_ids[0]), ci=0, rssi=rssi)  # labels unused
        p = predict(model, index, scan, args.k, args.rule)
        writer.writerow([f"{p.x:.4f}", f"{p.y:.4f}", p.rp_id])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftloc",
        description="Drift-robust WiFi fingerprint localization toolkit",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for per-epoch detail")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_sim(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_sweep(sub)
    _add_gradcheck(sub)
    _add_predict(sub)
    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep-fpr": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "predict": _cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(
            level=logging.DEBUG if args.verbose > 1 else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
    try:
        return _COMMANDS[args.command](args)
    except (DriftlocError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
