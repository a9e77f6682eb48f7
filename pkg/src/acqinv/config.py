"""Experiment configuration and its key/value file format.

The config file is an INI document with sections [experiment],
[siamese], [classifier], [scanner_a] and [scanner_b]. Every key has a
default; ``dump_config`` writes a fully commented file with all of them,
and ``load_config`` accepts any subset (unknown sections or keys are
errors, not silently ignored).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .classify import TissueClassifierConfig
from .phantom import MIN_PHANTOM_SIZE, ScannerProtocol, Tissue, TissueParams, default_protocols
from .siamese import SiameseConfig

VALID_MODELS = ("source", "target", "mrai")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything the learning-curve experiment needs.

    Subject ids are allocated contiguously: source train subjects first,
    then the target train subjects, then the held-out target subjects, so
    the three groups are always disjoint.
    """

    seed: int = 0
    phantom_size: int = 128
    n_source_subjects: int = 4
    n_target_train_subjects: int = 1
    n_heldout_subjects: int = 4
    grid: tuple[int, ...] = (1, 5, 10, 50, 100, 500, 1000)
    repetitions: int = 5
    source_patches_per_tissue: int = 75
    test_patches_per_tissue: int = 50
    da_patches_per_tissue: int = 90
    pair_budget: int = 50_000
    similar_fraction: float = 0.5
    svm_c: float = 100.0
    cv_folds: int = 5
    da_max_per_side: int = 1500
    models: tuple[str, ...] = VALID_MODELS
    include_da: bool = True
    workers: int = 1
    siamese: SiameseConfig = field(default_factory=SiameseConfig)
    classifier: TissueClassifierConfig = field(default_factory=TissueClassifierConfig)
    protocol_a: ScannerProtocol = field(default_factory=lambda: default_protocols()[0])
    protocol_b: ScannerProtocol = field(default_factory=lambda: default_protocols()[1])

    def __post_init__(self):
        if not self.grid:
            raise ValueError("n_target_labels grid must be non-empty")
        if any(int(n) < 1 for n in self.grid):
            raise ValueError(f"grid entries must be positive, got {self.grid}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.phantom_size < MIN_PHANTOM_SIZE:
            raise ValueError(
                f"phantom_size must be at least {MIN_PHANTOM_SIZE}, got {self.phantom_size}"
            )
        for name in ("n_source_subjects", "n_target_train_subjects", "n_heldout_subjects"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("source_patches_per_tissue", "test_patches_per_tissue",
                     "da_patches_per_tissue", "pair_budget", "cv_folds",
                     "da_max_per_side", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 0.0 < self.similar_fraction < 1.0:
            raise ValueError(
                f"similar_fraction must lie in (0, 1), got {self.similar_fraction}"
            )
        if self.svm_c <= 0.0:
            raise ValueError(f"svm_c must be positive, got {self.svm_c}")
        unknown = [m for m in self.models if m not in VALID_MODELS]
        if unknown or not self.models:
            raise ValueError(
                f"models must be a non-empty subset of {VALID_MODELS}, got {self.models}"
            )

    # Subject id blocks, disjoint by construction.
    def source_subjects(self) -> tuple[int, ...]:
        return tuple(range(self.n_source_subjects))

    def target_train_subjects(self) -> tuple[int, ...]:
        lo = self.n_source_subjects
        return tuple(range(lo, lo + self.n_target_train_subjects))

    def heldout_subjects(self) -> tuple[int, ...]:
        lo = self.n_source_subjects + self.n_target_train_subjects
        return tuple(range(lo, lo + self.n_heldout_subjects))


_TISSUE_PREFIX = {"csf": Tissue.CSF, "gm": Tissue.GRAY_MATTER, "wm": Tissue.WHITE_MATTER}

_EXPERIMENT_DOC = {
    "seed": "master seed; every stage derives its own stream from it",
    "phantom_size": f"phantom edge length in pixels (>= {MIN_PHANTOM_SIZE})",
    "n_source_subjects": "subjects scanned on scanner A for training",
    "n_target_train_subjects": "subjects scanned on scanner B providing labeled patches",
    "n_heldout_subjects": "scanner-B subjects reserved for the test draw",
    "grid": "comma-separated labeled-target-patches-per-tissue budgets",
    "repetitions": "independent repetitions per grid point",
    "source_patches_per_tissue": "training patches per tissue per source subject",
    "test_patches_per_tissue": "test patches per tissue per held-out subject",
    "da_patches_per_tissue": "discrepancy-measure patches per tissue per subject and side",
    "pair_budget": "maximum number of sampled training pairs",
    "similar_fraction": "fraction of sampled pairs with equal tissue (in (0,1))",
    "svm_c": "SVM regularization constant",
    "cv_folds": "stratified cross-validation folds",
    "da_max_per_side": "cap on patches per side entering the discrepancy SVM",
    "models": "subset of source,target,mrai to evaluate",
    "include_da": "also compute raw/feature discrepancy rows (true/false)",
    "workers": "reserved worker count; cells are independent jobs",
}

_SIAMESE_DOC = {
    "margin": "contrastive margin m (> 0)",
    "epochs": "training epochs over the pair set",
    "batch_size": "pairs per optimizer step",
    "learning_rate": "RMSprop learning rate",
    "rho": "RMSprop decay of the squared-gradient average",
    "epsilon": "RMSprop denominator offset",
    "dropout": "dropout rate in [0, 1)",
    "out_dim": "embedding dimension",
    "seed": "standalone training seed (the experiment derives its own)",
}

_CLASSIFIER_DOC = {
    "epochs": "training epochs",
    "batch_size": "patches per optimizer step",
    "learning_rate": "RMSprop learning rate",
    "rho": "RMSprop decay of the squared-gradient average",
    "epsilon": "RMSprop denominator offset",
    "dropout": "dropout rate in [0, 1)",
    "seed": "standalone training seed (the experiment derives its own)",
}

_SCANNER_DOC = {
    "flip_angle_deg": "excitation flip angle in degrees (0, 90]",
    "tr_ms": "repetition time in ms (> te_ms)",
    "te_ms": "echo time in ms (> 0)",
    "noise_sigma": "additive Gaussian sigma; 'auto' = 2% of peak signal",
}


def load_config(path) -> ExperimentConfig:
    """Parse a config file; unknown sections/keys or bad values raise ValueError."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as f:
            parser.read_file(f)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed config file {path}: {exc}") from exc

    known = {"experiment", "siamese", "classifier", "scanner_a", "scanner_b"}
    for section in parser.sections():
        if section not in known:
            raise ValueError(f"unknown config section [{section}]")

    cfg = ExperimentConfig()
    try:
        cfg = replace(cfg, **_section_updates(parser, "experiment", cfg))
        cfg = replace(cfg, siamese=_dataclass_updates(
            parser, "siamese", cfg.siamese, _SIAMESE_DOC))
        cfg = replace(cfg, classifier=_dataclass_updates(
            parser, "classifier", cfg.classifier, _CLASSIFIER_DOC))
        cfg = replace(cfg, protocol_a=_protocol_updates(parser, "scanner_a", cfg.protocol_a))
        cfg = replace(cfg, protocol_b=_protocol_updates(parser, "scanner_b", cfg.protocol_b))
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"malformed config file {path}: {exc}") from exc
    return cfg


def _section_updates(parser, section: str, cfg: ExperimentConfig) -> dict:
    updates = {}
    if not parser.has_section(section):
        return updates
    for key, raw in parser.items(section):
        if key not in _EXPERIMENT_DOC:
            raise ValueError(f"unknown key {key!r} in section [{section}]")
        if key == "grid":
            updates[key] = tuple(_parse_int(v, key) for v in raw.split(","))
        elif key == "models":
            updates[key] = tuple(v.strip() for v in raw.split(","))
        elif key == "include_da":
            updates[key] = _parse_bool(raw, key)
        elif key in ("similar_fraction", "svm_c"):
            updates[key] = _parse_float(raw, key)
        else:
            updates[key] = _parse_int(raw, key)
    return updates


def _dataclass_updates(parser, section: str, current, doc: dict):
    if not parser.has_section(section):
        return current
    updates = {}
    for key, raw in parser.items(section):
        if key not in doc:
            raise ValueError(f"unknown key {key!r} in section [{section}]")
        if key in ("epochs", "batch_size", "out_dim", "seed"):
            updates[key] = _parse_int(raw, key)
        else:
            updates[key] = _parse_float(raw, key)
    return replace(current, **updates)


def _protocol_updates(parser, section: str, current: ScannerProtocol) -> ScannerProtocol:
    if not parser.has_section(section):
        return current
    kwargs = {
        "name": current.name,
        "flip_angle_deg": current.flip_angle_deg,
        "tr_ms": current.tr_ms,
        "te_ms": current.te_ms,
        "noise_sigma": current.noise_sigma,
    }
    tissue_params = dict(current.tissue_params)
    for key, raw in parser.items(section):
        if key in ("flip_angle_deg", "tr_ms", "te_ms"):
            kwargs[key] = _parse_float(raw, key)
        elif key == "noise_sigma":
            kwargs[key] = None if raw.strip().lower() == "auto" else _parse_float(raw, key)
        else:
            prefix, _, suffix = key.partition("_")
            if prefix not in _TISSUE_PREFIX or suffix not in ("t1_ms", "t2star_ms", "pd"):
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            tissue = _TISSUE_PREFIX[prefix]
            tissue_params[tissue] = replace(
                tissue_params[tissue], **{suffix: _parse_float(raw, key)}
            )
    return ScannerProtocol(tissue_params=tissue_params, **kwargs)


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise ValueError(f"key {key!r}: expected an integer, got {raw!r}") from exc


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw.strip())
    except ValueError as exc:
        raise ValueError(f"key {key!r}: expected a number, got {raw!r}") from exc


def _parse_bool(raw: str, key: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"key {key!r}: expected a boolean, got {raw!r}")


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    """Render a fully commented config file; optionally write it to ``path``."""
    out = io.StringIO()

    def emit(section: str, doc: dict, values: dict) -> None:
        out.write(f"[{section}]\n")
        for key, comment in doc.items():
            out.write(f"# {comment}\n")
            out.write(f"{key} = {values[key]}\n")
        out.write("\n")

    emit("experiment", _EXPERIMENT_DOC, {
        "seed": cfg.seed,
        "phantom_size": cfg.phantom_size,
        "n_source_subjects": cfg.n_source_subjects,
        "n_target_train_subjects": cfg.n_target_train_subjects,
        "n_heldout_subjects": cfg.n_heldout_subjects,
        "grid": ", ".join(str(n) for n in cfg.grid),
        "repetitions": cfg.repetitions,
        "source_patches_per_tissue": cfg.source_patches_per_tissue,
        "test_patches_per_tissue": cfg.test_patches_per_tissue,
        "da_patches_per_tissue": cfg.da_patches_per_tissue,
        "pair_budget": cfg.pair_budget,
        "similar_fraction": cfg.similar_fraction,
        "svm_c": cfg.svm_c,
        "cv_folds": cfg.cv_folds,
        "da_max_per_side": cfg.da_max_per_side,
        "models": ", ".join(cfg.models),
        "include_da": str(cfg.include_da).lower(),
        "workers": cfg.workers,
    })
    emit("siamese", _SIAMESE_DOC, {
        "margin": cfg.siamese.margin,
        "epochs": cfg.siamese.epochs,
        "batch_size": cfg.siamese.batch_size,
        "learning_rate": cfg.siamese.learning_rate,
        "rho": cfg.siamese.rho,
        "epsilon": cfg.siamese.epsilon,
        "dropout": cfg.siamese.dropout,
        "out_dim": cfg.siamese.out_dim,
        "seed": cfg.siamese.seed,
    })
    emit("classifier", _CLASSIFIER_DOC, {
        "epochs": cfg.classifier.epochs,
        "batch_size": cfg.classifier.batch_size,
        "learning_rate": cfg.classifier.learning_rate,
        "rho": cfg.classifier.rho,
        "epsilon": cfg.classifier.epsilon,
        "dropout": cfg.classifier.dropout,
        "seed": cfg.classifier.seed,
    })
    for section, proto in (("scanner_a", cfg.protocol_a), ("scanner_b", cfg.protocol_b)):
        out.write(f"[{section}]\n")
        for key, comment in _SCANNER_DOC.items():
            out.write(f"# {comment}\n")
            if key == "noise_sigma":
                value = "auto" if proto.noise_sigma is None else proto.noise_sigma
            else:
                value = getattr(proto, key)
            out.write(f"{key} = {value}\n")
        out.write("# per-tissue T1 (ms), T2* (ms) and proton density\n")
        for prefix, tissue in _TISSUE_PREFIX.items():
            p = proto.tissue_params[tissue]
            out.write(f"{prefix}_t1_ms = {p.t1_ms}\n")
            out.write(f"{prefix}_t2star_ms = {p.t2star_ms}\n")
            out.write(f"{prefix}_pd = {p.pd}\n")
        out.write("\n")

    text = out.getvalue()
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text
