"""Learning-curve experiment over the labeled-target-budget grid.

For every grid cell (n target labels per tissue x repetition) the
harness simulates fresh phantoms and scans, draws patches, trains the
contrastive embedding on sampled pairs, trains the three classifiers,
and measures scanner discrepancy and held-out tissue error. Cells are
completely independent: each derives its own seed streams from the
master seed and the cell coordinates, so no cell consumes randomness of
another and any subset of cells can be recomputed bit-identically.

CSV rows follow the header (model, n_target_labels, seed, e_scanner,
d_A, tissue_error). Tissue-error rows carry model names source/target/
mrai; discrepancy rows carry raw (flattened patch intensities) and mrai
(learned embeddings), with the tissue_error column empty.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import train_tissue_classifier
from .config import ExperimentConfig
from .pairs import sample_pairs
from .phantom import BRAIN_TISSUES, PatchSet, extract_patches, generate_phantom, simulate_scan
from .seeding import STAGE_EVAL, STAGE_PAIRS, STAGE_PATCHES, STAGE_SIMULATE, STAGE_TRAIN, derive_seed
from .siamese import extract_features, train_siamese
from .svm import LinearSVM, proxy_a_distance, tissue_error

log = logging.getLogger("acqinv")

CSV_HEADER = ("model", "n_target_labels", "seed", "e_scanner", "d_A", "tissue_error")


@dataclass(frozen=True)
class EvalRow:
    """One CSV row; discrepancy rows leave tissue_error as None and vice versa."""

    model: str
    n_target_labels: int
    seed: int
    e_scanner: float | None = None
    d_A: float | None = None
    tissue_error: float | None = None


@dataclass(frozen=True)
class CellFailure:
    n_target_labels: int
    repetition: int
    message: str


@dataclass
class CurveResult:
    rows: list[EvalRow] = field(default_factory=list)
    failures: list[CellFailure] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for row in self.rows:
                writer.writerow([
                    row.model,
                    row.n_target_labels,
                    row.seed,
                    "" if row.e_scanner is None else repr(row.e_scanner),
                    "" if row.d_A is None else repr(row.d_A),
                    "" if row.tissue_error is None else repr(row.tissue_error),
                ])

    @staticmethod
    def from_csv(path) -> "CurveResult":
        result = CurveResult()
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
                raise ValueError(
                    f"unexpected CSV header {reader.fieldnames}, expected {list(CSV_HEADER)}"
                )
            for rec in reader:
                result.rows.append(EvalRow(
                    model=rec["model"],
                    n_target_labels=int(rec["n_target_labels"]),
                    seed=int(rec["seed"]),
                    e_scanner=float(rec["e_scanner"]) if rec["e_scanner"] else None,
                    d_A=float(rec["d_A"]) if rec["d_A"] else None,
                    tissue_error=float(rec["tissue_error"]) if rec["tissue_error"] else None,
                ))
        return result


def run_experiment(config: ExperimentConfig) -> CurveResult:
    """Run every (n_target_labels, repetition) cell of the configured grid.

    A failing cell is recorded in ``failures`` and the remaining cells
    continue. Rows are emitted in deterministic grid order: for each grid
    value, for each repetition, discrepancy rows (raw, mrai) first, then
    tissue-error rows in the configured model order.
    """
    result = CurveResult()
    for n_idx, n_labels in enumerate(config.grid):
        for rep in range(config.repetitions):
            try:
                rows, diag = run_cell(config, n_idx, rep)
            except Exception as exc:
                log.warning("cell n=%d rep=%d failed: %s", n_labels, rep, exc)
                result.failures.append(CellFailure(n_labels, rep, f"{type(exc).__name__}: {exc}"))
                continue
            result.rows.extend(rows)
            result.diagnostics.append(diag)
    return result


def run_cell(config: ExperimentConfig, n_idx: int, rep: int) -> tuple[list[EvalRow], dict]:
    """Run one grid cell; returns its CSV rows and a diagnostics dict."""
    n_labels = int(config.grid[n_idx])
    master = config.seed
    rep_seed = derive_seed(master, rep)
    data = _simulate_cell_data(config, n_idx, rep, n_labels)
    rows: list[EvalRow] = []
    diag = {
        "n_target_labels": n_labels,
        "repetition": rep,
        "source_train_count": len(data["source_train"]),
        "target_train_count": len(data["target_train"]),
        "test_count": len(data["test"]),
    }

    need_mrai = "mrai" in config.models or config.include_da
    svm_model = None
    if need_mrai:
        pairs = sample_pairs(
            data["source_train"],
            data["target_train"],
            budget=config.pair_budget,
            similar_fraction=config.similar_fraction,
            seed=derive_seed(master, STAGE_PAIRS, n_idx, rep),
        )
        diag["pair_count"] = len(pairs)
        diag["pairs_truncated"] = pairs.truncated
        siamese_cfg = replace(
            config.siamese, seed=derive_seed(master, STAGE_TRAIN, n_idx, rep, 0)
        )
        net, history = train_siamese(pairs, siamese_cfg)
        diag["final_loss"] = history.loss[-1] if history.loss else None

        if config.include_da:
            raw_da, raw_e = proxy_a_distance(
                data["da_source"].flat_pixels(),
                data["da_target"].flat_pixels(),
                C=config.svm_c,
                folds=config.cv_folds,
                max_per_side=config.da_max_per_side,
                seed=derive_seed(master, STAGE_EVAL, n_idx, rep, 0),
            )
            feat_da, feat_e = proxy_a_distance(
                extract_features(net, data["da_source"]),
                extract_features(net, data["da_target"]),
                C=config.svm_c,
                folds=config.cv_folds,
                max_per_side=config.da_max_per_side,
                seed=derive_seed(master, STAGE_EVAL, n_idx, rep, 1),
            )
            rows.append(EvalRow("raw", n_labels, rep_seed, e_scanner=raw_e, d_A=raw_da))
            rows.append(EvalRow("mrai", n_labels, rep_seed, e_scanner=feat_e, d_A=feat_da))

        if "mrai" in config.models:
            labeled = PatchSet.concat([data["source_train"], data["target_train"]])
            feats = extract_features(net, labeled)
            svm_model = LinearSVM(C=config.svm_c).fit(
                feats, labeled.tissues.astype(np.int64),
                seed=derive_seed(master, STAGE_TRAIN, n_idx, rep, 1),
            )

    for model_name in config.models:
        if model_name == "mrai":
            test_feats = extract_features(net, data["test"])
            err = tissue_error(svm_model, test_feats, data["test"].tissues.astype(np.int64))
        else:
            if model_name == "source":
                train_set = PatchSet.concat([data["source_train"], data["target_train"]])
                stage_tag = 2
            else:
                train_set = data["target_train"]
                stage_tag = 3
            clf_cfg = replace(
                config.classifier,
                seed=derive_seed(master, STAGE_TRAIN, n_idx, rep, stage_tag),
            )
            clf, _ = train_tissue_classifier(train_set, config=clf_cfg)
            diag[f"{model_name}_train_count"] = len(train_set)
            err = tissue_error(clf, data["test"], data["test"].tissues.astype(np.int64))
        rows.append(EvalRow(model_name, n_labels, rep_seed, tissue_error=err))
    return rows, diag


def simulate_dataset(config: ExperimentConfig, target_labels_per_tissue: int | None = None) -> dict:
    """One full dataset draw outside the grid: the cell (0, 0) streams.

    Returns the same patch-set dict a grid cell would see, with the
    target training pool sized ``target_labels_per_tissue`` (default: the
    largest grid value, so any smaller budget can be cut from it).
    """
    n = target_labels_per_tissue if target_labels_per_tissue is not None else max(config.grid)
    return _simulate_cell_data(config, 0, 0, int(n))


def _simulate_cell_data(config: ExperimentConfig, n_idx: int, rep: int, n_labels: int) -> dict:
    """Generate all patch sets of one cell from cell-local seed streams."""
    master = config.seed

    def scan_for(subject: int, protocol):
        phantom = generate_phantom(
            derive_seed(master, STAGE_SIMULATE, n_idx, rep),
            size=config.phantom_size,
            subject_id=subject,
        )
        return simulate_scan(
            phantom, protocol, seed=derive_seed(master, STAGE_SIMULATE, n_idx, rep, subject)
        )

    def draw(scan, n_per_tissue: int, purpose: int) -> PatchSet:
        return extract_patches(
            scan, scan.label_map, n_per_tissue, tissues=BRAIN_TISSUES,
            seed=derive_seed(master, STAGE_PATCHES, n_idx, rep, purpose, scan.subject_id),
        )

    source_scans = [scan_for(s, config.protocol_a) for s in config.source_subjects()]
    target_train_scans = [scan_for(s, config.protocol_b) for s in config.target_train_subjects()]
    heldout_scans = [scan_for(s, config.protocol_b) for s in config.heldout_subjects()]

    source_train = PatchSet.concat(
        [draw(sc, config.source_patches_per_tissue, 0) for sc in source_scans]
    )
    target_train = PatchSet.concat([draw(sc, n_labels, 1) for sc in target_train_scans])
    test = PatchSet.concat(
        [draw(sc, config.test_patches_per_tissue, 2) for sc in heldout_scans]
    )
    data = {"source_train": source_train, "target_train": target_train, "test": test}
    if config.include_da:
        data["da_source"] = PatchSet.concat(
            [draw(sc, config.da_patches_per_tissue, 3) for sc in source_scans]
        )
        data["da_target"] = PatchSet.concat(
            [draw(sc, config.da_patches_per_tissue, 4)
             for sc in target_train_scans + heldout_scans]
        )
    return data
