"""Acquisition-invariant MR patch representations.

A small library for learning patch embeddings that ignore scanner
differences: a synthetic gradient-echo phantom simulator, a Siamese
convolutional network trained with a margin contrastive loss, linear-SVM
based domain discrepancy measures, and a cross-scanner tissue
classification benchmark.
"""

__version__ = "0.1.0"

from .phantom import (
    Tissue,
    TissueParams,
    ScannerProtocol,
    LabelMap,
    Scan,
    Patch,
    PatchSet,
    TissueExhaustedError,
    gradient_echo_signal,
    default_protocols,
    generate_phantom,
    simulate_scan,
    extract_patches,
)
from .pairs import (
    PairType,
    PairSet,
    count_pair_combinations,
    count_unordered_pairs,
    enumerate_pairs,
    sample_pairs,
)
from .network import Network, RMSprop, build_patch_network
from .siamese import (
    SiameseConfig,
    TrainHistory,
    l1_distance,
    siamese_loss,
    siamese_loss_grad,
    train_siamese,
    extract_features,
)
from .svm import LinearSVM, cross_val_error, proxy_a_distance, tissue_error
from .classify import TissueClassifierConfig, train_tissue_classifier
from .config import ExperimentConfig, load_config, dump_config
from .experiment import CurveResult, run_experiment

__all__ = [
    "Tissue",
    "TissueParams",
    "ScannerProtocol",
    "LabelMap",
    "Scan",
    "Patch",
    "PatchSet",
    "TissueExhaustedError",
    "gradient_echo_signal",
    "default_protocols",
    "generate_phantom",
    "simulate_scan",
    "extract_patches",
    "PairType",
    "PairSet",
    "count_pair_combinations",
    "count_unordered_pairs",
    "enumerate_pairs",
    "sample_pairs",
    "Network",
    "RMSprop",
    "build_patch_network",
    "SiameseConfig",
    "TrainHistory",
    "l1_distance",
    "siamese_loss",
    "siamese_loss_grad",
    "train_siamese",
    "extract_features",
    "LinearSVM",
    "cross_val_error",
    "proxy_a_distance",
    "tissue_error",
    "TissueClassifierConfig",
    "train_tissue_classifier",
    "ExperimentConfig",
    "load_config",
    "dump_config",
    "CurveResult",
    "run_experiment",
]
