"""Command-line interface.

Subcommands compose the pipeline stage by stage (simulate, pairs, train,
features, evaluate) or run it end to end (curve, plot). Every subcommand
honors --config, --seed and --out; relative --out paths are rooted at
$ACQINV_OUT_ROOT when that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import dataio
from .config import ExperimentConfig, dump_config, load_config
from .experiment import CurveResult, run_experiment, simulate_dataset
from .network import Network
from .pairs import sample_pairs
from .phantom import Tissue
from .plots import emit_plots
from .siamese import extract_features, train_siamese
from .svm import proxy_a_distance

log = logging.getLogger("acqinv")

OUT_ROOT_ENV = "ACQINV_OUT_ROOT"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    level = logging.INFO
    if args.quiet:
        level = logging.ERROR
    elif args.verbose:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, ArithmeticError) as exc:
        log.error("%s", exc)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acqinv",
        description="Scanner-invariant MR patch representations: "
                    "simulate phantoms, train the contrastive embedding, evaluate.",
    )
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    parser.add_argument("--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate phantom scans and patch datasets")
    _common(p)
    p.add_argument("--n-target", type=int, default=None,
                   help="target training patches per tissue (default: largest grid value)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("pairs", help="sample similarity-labeled pairs from patch files")
    _common(p)
    p.add_argument("--source", required=True, help="source patch container")
    p.add_argument("--target", required=True, help="target patch container")
    p.add_argument("--budget", type=int, default=None, help="pair budget override")
    p.add_argument("--similar-fraction", type=float, default=None,
                   help="similar-pair fraction override")
    p.set_defaults(func=_cmd_pairs)

    p = sub.add_parser("train", help="train the shared-weight embedding on a pair file")
    _common(p)
    p.add_argument("--pairs", required=True, help="pair container from the pairs subcommand")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("features", help="embed patches with a trained model")
    _common(p)
    p.add_argument("--model", required=True, help="weight file from the train subcommand")
    p.add_argument("--data", required=True, help="patch container to embed")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("evaluate", help="scanner discrepancy of raw patches vs embeddings")
    _common(p)
    p.add_argument("--model", required=True, help="weight file from the train subcommand")
    p.add_argument("--source", required=True, help="source patch container")
    p.add_argument("--target", required=True, help="target patch container")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("curve", help="run the full learning-curve experiment")
    _common(p)
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("plot", help="render charts from a curve CSV")
    _common(p)
    p.add_argument("--curve", required=True, help="curve.csv produced by the curve subcommand")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("config", help="write a fully documented default config file")
    _common(p)
    p.set_defaults(func=_cmd_config)
    return parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="config file (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", required=True, help="output file or directory")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_path(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _out_dir(raw: str) -> Path:
    path = _out_path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args.out)
    data = simulate_dataset(cfg, target_labels_per_tissue=args.n_target)
    names = {
        "source_train": "source_train.apd",
        "target_train": "target_train.apd",
        "test": "target_test.apd",
        "da_source": "da_source.apd",
        "da_target": "da_target.apd",
    }
    written = {}
    for key, patches in data.items():
        dataio.save_patches(out / names[key], patches)
        written[names[key]] = {
            "patches": len(patches),
            "per_tissue": {Tissue(t).name: c for t, c in patches.tissue_counts().items() if c},
        }
        log.info("wrote %s (%d patches)", out / names[key], len(patches))
    dataio.write_sidecar(out / "simulate.json", {
        "seed": cfg.seed,
        "phantom_size": cfg.phantom_size,
        "protocol_a": cfg.protocol_a.name,
        "protocol_b": cfg.protocol_b.name,
        "files": written,
    })
    return 0


def _cmd_pairs(args) -> int:
    cfg = _load(args)
    out = _out_path(args.out)
    source = dataio.load_patches(args.source)
    target = dataio.load_patches(args.target)
    budget = args.budget if args.budget is not None else cfg.pair_budget
    frac = args.similar_fraction if args.similar_fraction is not None else cfg.similar_fraction
    pairs = sample_pairs(source, target, budget=budget, similar_fraction=frac, seed=cfg.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.save_pairs(out, pairs)
    dataio.write_sidecar(out.with_suffix(out.suffix + ".json"), {
        "seed": cfg.seed,
        "budget": budget,
        "similar_fraction": frac,
        "n_pairs": len(pairs),
        "truncated": pairs.truncated,
        "type_counts": {t.name: c for t, c in pairs.type_counts().items()},
    })
    log.info("wrote %s (%d pairs%s)", out, len(pairs),
             ", truncated" if pairs.truncated else "")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_path(args.out)
    pairs = dataio.load_pairs(args.pairs)
    siamese_cfg = cfg.siamese if args.seed is None else replace(cfg.siamese, seed=args.seed)
    net, history = train_siamese(pairs, siamese_cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save(out)
    history_path = out.with_suffix(out.suffix + ".history.csv")
    history.to_csv(history_path)
    dataio.write_sidecar(out.with_suffix(out.suffix + ".json"), asdict(siamese_cfg))
    log.info("wrote %s and %s (final loss %.4f)", out, history_path,
             history.loss[-1] if history.loss else float("nan"))
    return 0


def _cmd_features(args) -> int:
    out = _out_path(args.out)
    net = Network.load(args.model)
    patches = dataio.load_patches(args.data)
    feats = extract_features(net, patches)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            [f"x{i}" for i in range(feats.shape[1])] + ["tissue", "scanner", "subject"]
        )
        for i in range(feats.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in feats[i]]
                + [int(patches.tissues[i]), str(patches.scanner_ids[i]),
                   int(patches.subject_ids[i])]
            )
    log.info("wrote %s (%d feature vectors)", out, feats.shape[0])
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load(args)
    out = _out_path(args.out)
    net = Network.load(args.model)
    source = dataio.load_patches(args.source)
    target = dataio.load_patches(args.target)
    raw_da, raw_e = proxy_a_distance(
        source.flat_pixels(), target.flat_pixels(),
        C=cfg.svm_c, folds=cfg.cv_folds, max_per_side=cfg.da_max_per_side, seed=cfg.seed,
    )
    feat_da, feat_e = proxy_a_distance(
        extract_features(net, source), extract_features(net, target),
        C=cfg.svm_c, folds=cfg.cv_folds, max_per_side=cfg.da_max_per_side, seed=cfg.seed,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerow(["raw_e_scanner", repr(raw_e)])
        writer.writerow(["raw_d_A", repr(raw_da)])
        writer.writerow(["feature_e_scanner", repr(feat_e)])
        writer.writerow(["feature_d_A", repr(feat_da)])
    log.info("raw d_A = %.3f (e = %.3f); feature d_A = %.3f (e = %.3f)",
             raw_da, raw_e, feat_da, feat_e)
    return 0


def _cmd_curve(args) -> int:
    cfg = _load(args)
    out = _out_dir(args.out)
    result = run_experiment(cfg)
    result.to_csv(out / "curve.csv")
    log.info("wrote %s (%d rows)", out / "curve.csv", len(result.rows))
    if result.failures:
        with open(out / "failures.txt", "w") as f:
            for fail in result.failures:
                f.write(f"n={fail.n_target_labels} rep={fail.repetition}: {fail.message}\n")
        log.warning("%d cell(s) failed; see %s", len(result.failures), out / "failures.txt")
    if not result.rows:
        log.error("every cell failed; no rows produced")
        return 1
    return 0


def _cmd_plot(args) -> int:
    out = _out_dir(args.out)
    curve = CurveResult.from_csv(args.curve)
    for path in emit_plots(curve, out):
        log.info("wrote %s", path)
    return 0


def _cmd_config(args) -> int:
    cfg = _load(args)
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out)
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
