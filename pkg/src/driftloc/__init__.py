"""Drift-robust WiFi RSSI fingerprint localization.

A Siamese convolutional encoder trained with floorplan-aware triplet
sampling and AP-dropout augmentation embeds fingerprints onto the unit
sphere; an exact KNN over those embeddings answers location queries and
stays usable as access points drift or disappear.  A synthetic drift
simulator and an evaluation harness make the longitudinal protocol
runnable end to end.
"""

from .augment import (AugmentConfig, add_gaussian_noise, apply_ap_dropout,
                      draw_turnoff_fraction)
from .data import (AccessPointId, Fingerprint, FingerprintDataset, FloorPlan,
                   ReferencePoint, load_dataset, save_dataset, split_by_ci)
from .encoder import (EncoderConfig, EncoderModel, encode, encode_batch,
                      gradient_check, init_model, train_step, triplet_loss)
from .errors import (DatasetFormatError, DriftlocError, HingeInactiveError,
                     ModelFormatError, NonFiniteLossError, StochasticModelError)
from .evaluate import (EvalReport, SweepResult, evaluate_baseline_over_time,
                       evaluate_over_time, fpr_sweep, localization_error)
from .localizer import (EmbeddingIndex, Prediction, TrainConfig,
                        baseline_knn_predict, predict, train)
from .model_io import load_model, save_model
from .preprocess import FingerprintImage, normalize_rssi, to_image
from .sampler import (NegativePmf, Triplet, build_pmf_table, default_sigma_sel,
                      make_batch, negative_pmf, sample_triplet)
from .simulate import GroundTruth, SimConfig, generate, preset, write_scenario

__version__ = "0.1.0"

__all__ = [
    "AccessPointId", "AugmentConfig", "DatasetFormatError", "DriftlocError",
    "EmbeddingIndex", "EncoderConfig", "EncoderModel", "EvalReport",
    "Fingerprint", "FingerprintDataset", "FingerprintImage", "FloorPlan",
    "GroundTruth", "HingeInactiveError", "ModelFormatError", "NegativePmf",
    "NonFiniteLossError", "Prediction", "ReferencePoint", "SimConfig",
    "StochasticModelError", "SweepResult", "TrainConfig", "Triplet",
    "add_gaussian_noise", "apply_ap_dropout", "baseline_knn_predict",
    "build_pmf_table", "default_sigma_sel", "draw_turnoff_fraction", "encode",
    "encode_batch", "evaluate_baseline_over_time", "evaluate_over_time",
    "fpr_sweep", "generate", "gradient_check", "init_model", "load_dataset",
    "load_model", "localization_error", "make_batch", "negative_pmf",
    "normalize_rssi", "predict", "preset", "sample_triplet", "save_dataset",
    "save_model", "split_by_ci", "to_image", "train", "train_step",
    "triplet_loss", "write_scenario",
]
