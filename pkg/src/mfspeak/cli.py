"""``mfspeak`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .classifier import ClassifierError
from .config import load_config
from .features import FeatureError
from .mfdfa import MfdfaError
from .pipeline import (
    PipelineError, cmd_analyze, cmd_corrmatrix, cmd_report, cmd_synth, cmd_synth_single,
    cmd_train_eval, read_manifest,
)
from .signal_io import SignalError

log = logging.getLogger("mfspeak")


def _add_config_flags(p: argparse.ArgumentParser, svm: bool = False) -> None:
    g = p.add_argument_group("analysis settings (override --config)")
    g.add_argument("--config", type=Path, help="INI file with [mfdfa] and [svm] sections")
    g.add_argument("--q-min", type=float, help="smallest moment order q (default -5)")
    g.add_argument("--q-max", type=float, help="largest moment order q (default 5)")
    g.add_argument("--q-step", type=float, help="q spacing (default 0.25)")
    g.add_argument("--q-grid", help="explicit comma-separated q values")
    g.add_argument("--scale-min", type=int, help="smallest window in samples (default 16)")
    g.add_argument("--scale-max", help="largest window in samples (default auto = floor(N/4))")
    g.add_argument("--scale-count", type=int, help="number of log-spaced scales (default 20)")
    g.add_argument("--scale-spacing", choices=["dyadic", "log"],
                   help="window sizes: powers of two (default) or log-spaced")
    g.add_argument("--detrend-order", type=int, help="polynomial detrending order m (default 1)")
    g.add_argument("--fit-cutoff", help="fit only points with f >= cutoff*max f (default none)")
    g.add_argument("--strict-paper", action="store_true",
                   help="forward-only windows; drops the windows tiled from the series end")
    if svm:
        s = p.add_argument_group("classifier settings (override --config)")
        s.add_argument("--C", dest="C", type=float, help="SVM box constraint (default 100)")
        s.add_argument("--gamma", help="RBF width or 'auto' = 1/(d * mean variance) (default auto)")
        s.add_argument("--tolerance", type=float, help="SMO KKT tolerance (default 1e-3)")
        s.add_argument("--max-passes", type=int, help="SMO iteration bound (default 10000)")
        s.add_argument("--ratio", dest="holdout_ratio", type=float,
                       help="hold-out fraction (default 0.25)")
        s.add_argument("--unstratified", action="store_true",
                       help="draw the test set from the pooled corpus instead of per class")
        s.add_argument("--grid-size", type=int,
                       help="alpha grid points for spectrum correlation (default 128)")


def _run_config(args, manifest_config=None):
    overrides = {
        "q_min": args.q_min, "q_max": args.q_max, "q_step": args.q_step, "q_grid": args.q_grid,
        "scale_min": args.scale_min, "scale_max": args.scale_max,
        "scale_count": args.scale_count, "scale_spacing": args.scale_spacing,
        "detrend_order": args.detrend_order, "fit_cutoff": args.fit_cutoff,
    }
    if args.strict_paper:
        overrides["use_both_ends"] = False
    for key in ("C", "gamma", "tolerance", "max_passes", "holdout_ratio", "grid_size"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "unstratified", False):
        overrides["stratified"] = False
    path = args.config if args.config is not None else manifest_config
    return load_config(path, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfspeak",
        description="Speaker identification from MFDFA singularity spectra.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth",
                       help="write synthetic cascade clips (a 5-speaker surrogate corpus) or one oracle series")
    p.add_argument("--out", type=Path, required=True,
                   help="output directory (corpus) or .npy file (single series)")
    p.add_argument("--classes", type=int, default=5, help="number of synthetic speakers (max 5) (default: %(default)s)")
    p.add_argument("--per-class", type=int, default=20, help="clips per speaker (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="top-level seed (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.05,
                   help="per-clip Gaussian jitter as a fraction of the cascade std (default: %(default)s)")
    p.add_argument("--levels", type=int, default=14, help="cascade levels per corpus clip (default: %(default)s)")
    p.add_argument("--embed", action="store_true",
                   help="write generator specs into the manifest instead of clip files")
    p.add_argument("--cascade-levels", type=int, help="single binomial cascade of 2**N samples")
    p.add_argument("--multiplier", type=float, default=0.75, help="cascade multiplier a in (0.5, 1) (default: %(default)s)")
    p.add_argument("--white-noise", type=int, metavar="N", help="single white-noise series of N samples")

    p = sub.add_parser("analyze",
                       help="MFDFA + features for every clip in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")
    _add_config_flags(p)

    p = sub.add_parser("corrmatrix",
                       help="cross-correlation matrix of spectrum CSVs")
    p.add_argument("spectra", nargs="+", type=Path,
                   help="spectrum CSVs, or one directory holding them")
    p.add_argument("--manifest", type=Path,
                   help="order spectra by this manifest (speaker blocks in manifest order)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--grid-size", type=int, default=128, help="alpha grid points (default: %(default)s)")

    p = sub.add_parser("train-eval",
                       help="hold-out split, SVM training and confusion matrix")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0, help="top-level seed (default: %(default)s)")
    p.add_argument("--model", type=Path,
                   help="evaluate this saved model on all rows of --features; no training")
    _add_config_flags(p, svm=True)

    p = sub.add_parser("report",
                       help="run analyze, corrmatrix and train-eval and write report.json")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0, help="top-level seed (default: %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")
    _add_config_flags(p, svm=True)
    return parser


def _spectrum_paths(args) -> list[Path]:
    if len(args.spectra) == 1 and args.spectra[0].is_dir():
        paths = sorted(args.spectra[0].glob("*.csv"))
    else:
        paths = list(args.spectra)
    if args.manifest is not None:
        by_stem = {p.stem: p for p in paths}
        order = [e.clip_id for e in read_manifest(args.manifest, check_files=False).entries]
        paths = [by_stem[c] for c in order if c in by_stem]
    return paths


def _manifest_config(manifest_path: Path):
    m = read_manifest(manifest_path)
    return (manifest_path.parent / m.config_path) if m.config_path else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            if args.cascade_levels is not None or args.white_noise is not None:
                ts = cmd_synth_single(args.out, args.cascade_levels, args.multiplier,
                                      args.white_noise, args.seed)
                log.info("wrote %d samples to %s", len(ts), args.out)
            else:
                path = cmd_synth(args.out, args.classes, args.per_class, args.seed,
                                 args.noise, args.levels, args.embed)
                log.info("wrote %s", path)
            return 0

        if args.command == "analyze":
            manifest = read_manifest(args.manifest)
            cfg = _run_config(args, _manifest_config(args.manifest))
            res = cmd_analyze(manifest, cfg.mfdfa, args.out, args.jobs)
            log.info("%d clips analysed, %d failed -> %s", res["n_ok"], res["n_failed"],
                     res["features"])
            return 1 if res["n_failed"] else 0

        if args.command == "corrmatrix":
            res = cmd_corrmatrix(_spectrum_paths(args), args.out, args.grid_size)
            log.info("%dx%d matrix -> %s (within %.3f, between %.3f)", res["n"], res["n"],
                     res["matrix"], res["within"], res["between"])
            return 0

        if args.command == "train-eval":
            cfg = _run_config(args)
            res = cmd_train_eval(args.features, args.out, cfg, args.seed, args.model)
            print((args.out / "confusion.txt").read_text(), end="")
            log.info("accuracy %.4f", res["accuracy"])
            return 0

        if args.command == "report":
            cfg = _run_config(args, _manifest_config(args.manifest))
            rep = cmd_report(args.manifest, args.out, cfg, args.seed, args.jobs)
            print((args.out / "report.txt").read_text(), end="")
            return 1 if rep["n_failed"] else 0
    except (PipelineError, MfdfaError, FeatureError, ClassifierError, SignalError) as exc:
        log.error("%s", exc)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
