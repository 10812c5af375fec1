"""Batch stages: synth -> analyze -> corrmatrix -> train-eval -> report.

Stages exchange plain CSV files. Each file starts with a ``# mfspeak <kind> v<N>``
line; readers reject files of the wrong kind or version.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import (
    CASCADE_MULTIPLIERS, ClassifierError, ConfusionMatrix, corpus_jitter,
    evaluate, format_table, load_model, make_synthetic_corpus, save_model, speaker_label,
    stratified_holdout, train_svm,
)
from .config import RunConfig, config_hash
from .features import (
    FeatureError, block_contrast, cross_correlation_matrix, extract_features,
    resample_to_common_grid,
)
from .mfdfa import MfdfaConfig, MfdfaError, SingularitySpectrum, run_mfdfa, scaling_exponents
from .signal_io import (
    CascadeSpec, SignalError, TimeSeries, gen_binomial_cascade, gen_white_noise, load_series,
    segment,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, message: str, stage: str | None = None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage


# --------------------------------------------------------------------- file io

def _header(kind: str) -> str:
    return f"# mfspeak {kind} v{FORMAT_VERSION}"


def _write_rows(path, kind: str, header, rows, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header(kind) + "\n")
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path, kind: str) -> tuple[list[str], list[dict], list[str]]:
    path = Path(path)
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _header(kind):
        raise PipelineError(f"{path}: expected header '{_header(kind)}'")
    comments = [ln[1:].strip() for ln in lines[1:] if ln.startswith("#")]
    body = [ln for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(body)
    return list(reader.fieldnames or []), list(reader), comments


def _fmt(x) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    source: str
    speaker_label: str
    start_s: float | None = None
    duration_s: float | None = None


@dataclass(frozen=True)
class CorpusManifest:
    entries: list[ManifestEntry]
    base_dir: Path = Path(".")
    config_path: str | None = None

    def __len__(self):
        return len(self.entries)


MANIFEST_FIELDS = ["clip_id", "source", "speaker_label", "start_s", "duration_s"]


def write_manifest(path, manifest: CorpusManifest) -> None:
    comments = [f"config: {manifest.config_path}"] if manifest.config_path else []
    rows = [[e.clip_id, e.source, e.speaker_label,
             "" if e.start_s is None else repr(e.start_s),
             "" if e.duration_s is None else repr(e.duration_s)] for e in manifest.entries]
    _write_rows(path, "manifest", MANIFEST_FIELDS, rows, comments)


def read_manifest(path, check_files: bool = True) -> CorpusManifest:
    """Parse a manifest; relative sources resolve against the manifest's directory."""
    path = Path(path)
    _, rows, comments = _read_rows(path, "manifest")
    config_path = None
    for c in comments:
        if c.startswith("config:"):
            config_path = c.split(":", 1)[1].strip()
    entries, seen = [], set()
    for n, row in enumerate(rows, 1):
        clip = (row.get("clip_id") or "").strip()
        label = (row.get("speaker_label") or "").strip()
        source = (row.get("source") or "").strip()
        if not clip or not label or not source:
            raise PipelineError(f"{path} row {n}: clip_id, source and speaker_label are required")
        if clip in seen:
            raise PipelineError(f"{path}: duplicate clip_id {clip!r}")
        seen.add(clip)
        start = row.get("start_s") or ""
        dur = row.get("duration_s") or ""
        entry = ManifestEntry(clip, source, label,
                              float(start) if start.strip() else None,
                              float(dur) if dur.strip() else None)
        if check_files and not _is_generator(source) and not (path.parent / source).is_file():
            raise PipelineError(f"{path}: clip {clip!r} references missing file {source}")
        entries.append(entry)
    return CorpusManifest(entries, path.parent, config_path)


def _is_generator(source: str) -> bool:
    return source.startswith(("cascade:", "noise:"))


def _parse_generator(source: str) -> tuple[str, dict]:
    kind, _, rest = source.partition(":")
    args = {}
    for part in filter(None, rest.split(";")):
        k, _, v = part.partition("=")
        args[k.strip()] = v.strip()
    return kind, args


def generator_source(kind: str, **kwargs) -> str:
    return kind + ":" + ";".join(f"{k}={v}" for k, v in kwargs.items())


def materialize(entry: ManifestEntry, base_dir: Path) -> TimeSeries:
    """Load or generate the series a manifest entry refers to, then cut its window."""
    if _is_generator(entry.source):
        kind, a = _parse_generator(entry.source)
        if kind == "cascade":
            levels, mult = int(a["levels"]), float(a["a"])
            x = gen_binomial_cascade(CascadeSpec(levels, mult)).samples
            noise = float(a.get("noise", 0.0))
            if noise:
                x = x + noise * x.std() * corpus_jitter(
                    int(a["seed"]), int(a["class"]), int(a["clip"]), x.size)
            ts = TimeSeries(x, 1.0, entry.source)
        else:
            ts = gen_white_noise(int(a["n"]), int(a["seed"]))
    else:
        ts = load_series(base_dir / entry.source)
    if entry.start_s is not None or entry.duration_s is not None:
        start = entry.start_s or 0.0
        dur = entry.duration_s if entry.duration_s is not None else ts.duration - start
        ts = segment(ts, start, dur)
    return ts


# -------------------------------------------------------------------- synth

def cmd_synth(out_dir, classes: int = 5, per_class: int = 20, seed: int = 0,
              noise: float = 0.05, levels: int = 14, embed: bool = False) -> Path:
    """Write the synthetic speaker corpus as ``.npy`` clips plus ``manifest.csv``.

    With ``embed`` no clip files are written; the manifest carries generator
    specs that rebuild each clip exactly.
    """
    if not 1 <= classes <= len(CASCADE_MULTIPLIERS):
        raise PipelineError(
            f"--classes must be between 1 and {len(CASCADE_MULTIPLIERS)}", "synth")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not embed:
            (out / "clips").mkdir(exist_ok=True)
    except OSError as exc:
        raise PipelineError(f"cannot create {out}: {exc}", "synth") from exc
    entries = []
    for k in range(classes):
        base = gen_binomial_cascade(CascadeSpec(levels, CASCADE_MULTIPLIERS[k])).samples
        for j in range(per_class):
            clip_id = f"s{k + 1}_c{j + 1:03d}"
            src = generator_source("cascade", levels=levels, a=CASCADE_MULTIPLIERS[k],
                                   noise=noise, seed=seed, **{"class": k, "clip": j})
            if not embed:
                x = base + noise * base.std() * corpus_jitter(seed, k, j, base.size)
                rel = f"clips/{clip_id}.npy"
                np.save(out / rel, x, allow_pickle=False)
                src = rel
            entries.append(ManifestEntry(clip_id, src, speaker_label(k)))
    path = out / "manifest.csv"
    write_manifest(path, CorpusManifest(entries, out))
    return path


def cmd_synth_single(out_path, cascade_levels: int | None = None, multiplier: float = 0.75,
                     white_noise: int | None = None, seed: int = 0) -> TimeSeries:
    if (cascade_levels is None) == (white_noise is None):
        raise PipelineError("give exactly one of --cascade-levels or --white-noise", "synth")
    if cascade_levels is not None:
        ts = gen_binomial_cascade(CascadeSpec(cascade_levels, multiplier))
    else:
        ts = gen_white_noise(white_noise, seed)
    np.save(out_path, ts.samples, allow_pickle=False)
    return ts


# ------------------------------------------------------------------- analyze

SPECTRUM_FIELDS = ["q", "h", "r2", "tau", "alpha", "f_alpha"]
FIT_FIELDS = ["A", "B", "C", "alpha0", "W", "endpoint_width"]
FEATURE_FIELDS = ["clip_id", "speaker_label", "feature1", "feature2", "width",
                  "config_hash"]


@dataclass
class ClipResult:
    entry: ManifestEntry
    row: list | None = None
    spectrum_rows: list | None = None
    fit_row: list | None = None
    error: str | None = None
    stage: str | None = None


def analyze_clip(entry: ManifestEntry, base_dir: Path, cfg: MfdfaConfig) -> ClipResult:
    stage = "load"
    try:
        ts = materialize(entry, base_dir)
        stage = "mfdfa"
        res = run_mfdfa(ts, cfg)
        stage = "features"
        fv = extract_features(res.spectrum, res.fit.width, entry.clip_id, entry.speaker_label)
    except (SignalError, MfdfaError, FeatureError, OSError, KeyError, ValueError) as exc:
        if isinstance(exc, MfdfaError) and exc.stage:
            stage = f"mfdfa/{exc.stage}"
        return ClipResult(entry, error=str(exc), stage=stage)
    _, tau = scaling_exponents(res.hurst)
    spec_rows = [[_fmt(v) for v in vals] for vals in zip(
        res.hurst.q, res.hurst.h, res.hurst.r2, tau, res.spectrum.alpha, res.spectrum.f)]
    fit = res.fit
    fit_row = [_fmt(v) for v in (fit.A, fit.B, fit.C, fit.alpha0, fit.width, fit.endpoint_width)]
    row = [entry.clip_id, entry.speaker_label, _fmt(fv.feature1), _fmt(fv.feature2),
           _fmt(fv.aux_width), config_hash(cfg)]
    return ClipResult(entry, row, spec_rows, fit_row)


def _analyze_star(args):
    return analyze_clip(*args)


def write_spectrum(path, clip_id: str, label: str, rows, fit_row) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header("spectrum") + "\n")
        fh.write(f"# clip_id={clip_id}\n# speaker_label={label}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTRUM_FIELDS)
        w.writerows(rows)
        fh.write("# fit\n")
        w.writerow(FIT_FIELDS)
        w.writerow(fit_row)


def read_spectrum(path) -> tuple[str, str, SingularitySpectrum, dict]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != _header("spectrum"):
        raise PipelineError(f"{path}: expected header '{_header('spectrum')}'")
    meta = {}
    for ln in lines[1:]:
        if ln.startswith("# ") and "=" in ln:
            k, _, v = ln[2:].partition("=")
            meta[k.strip()] = v.strip()
    split = lines.index("# fit")
    table = list(csv.DictReader([ln for ln in lines[1:split] if not ln.startswith("#")]))
    fit = list(csv.DictReader(lines[split + 1:]))[0]
    spec = SingularitySpectrum(
        np.array([float(r["alpha"]) for r in table]),
        np.array([float(r["f_alpha"]) for r in table]),
        np.array([float(r["q"]) for r in table]),
    )
    return meta.get("clip_id", path.stem), meta.get("speaker_label", ""), spec, \
        {k: float(v) for k, v in fit.items()}


def cmd_analyze(manifest: CorpusManifest, cfg: MfdfaConfig, out_dir, jobs: int = 1) -> dict:
    """Run MFDFA and feature extraction for every clip.

    Rows are written in manifest order whatever ``jobs`` is. Failed clips are
    listed in ``failures.csv``; the rest of the corpus is still processed.
    """
    if len(manifest) == 0:
        raise PipelineError("manifest has no clips", "analyze")
    out = Path(out_dir)
    spec_dir = out / "spectra"
    spec_dir.mkdir(parents=True, exist_ok=True)
    work = [(e, manifest.base_dir, cfg) for e in manifest.entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_star, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_analyze_star(w) for w in work]

    rows, failures = [], []
    for r in results:
        if r.error is not None:
            log.warning("clip %s failed at %s: %s", r.entry.clip_id, r.stage, r.error)
            failures.append([r.entry.clip_id, r.stage, r.error])
            continue
        rows.append(r.row)
        write_spectrum(spec_dir / f"{r.entry.clip_id}.csv", r.entry.clip_id,
                       r.entry.speaker_label, r.spectrum_rows, r.fit_row)
    _write_rows(out / "features.csv", "features", FEATURE_FIELDS, rows)
    fail_path = out / "failures.csv"
    if failures:
        _write_rows(fail_path, "failures", ["clip_id", "stage", "message"], failures)
    elif fail_path.exists():
        fail_path.unlink()
    return {"features": out / "features.csv", "n_ok": len(rows), "n_failed": len(failures),
            "spectra": [spec_dir / f"{r[0]}.csv" for r in rows]}


def read_features(path) -> tuple[list[str], list[str], np.ndarray]:
    """Return ``(clip_ids, labels, X)`` with X holding (feature1, feature2) rows."""
    _, rows, _ = _read_rows(path, "features")
    ids = [r["clip_id"] for r in rows]
    labels = [r["speaker_label"] for r in rows]
    X = np.array([[float(r["feature1"]), float(r["feature2"])] for r in rows]).reshape(-1, 2)
    return ids, labels, X


def _subset_features(src, dst, keep: set) -> None:
    fields, rows, _ = _read_rows(src, "features")
    _write_rows(dst, "features", fields,
                [[r[f] for f in fields] for r in rows if r["clip_id"] in keep])


# ---------------------------------------------------------------- corrmatrix

def cmd_corrmatrix(spectrum_paths, out_dir, grid_size: int = 128) -> dict:
    """Pearson correlation matrix of spectra resampled onto one alpha grid."""
    paths = [Path(p) for p in spectrum_paths]
    if len(paths) < 2:
        raise PipelineError("need at least 2 spectra", "corrmatrix")
    ids, labels, specs = [], [], []
    for p in paths:
        clip, label, spec, _ = read_spectrum(p)
        ids.append(clip)
        labels.append(label)
        specs.append(spec)
    try:
        _, aligned = resample_to_common_grid(specs, grid_size)
        r = cross_correlation_matrix(aligned, ids)
    except FeatureError as exc:
        raise PipelineError(str(exc), "corrmatrix") from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "corr_matrix.csv", "corrmatrix", ["clip_id"] + ids,
                [[cid] + [_fmt(v) for v in row] for cid, row in zip(ids, r)])
    _write_rows(out / "corr_legend.csv", "corrlegend", ["index", "clip_id", "speaker_label"],
                [[i, cid, lab] for i, (cid, lab) in enumerate(zip(ids, labels))])
    blocks = []
    for i, lab in enumerate(labels):
        if blocks and blocks[-1][2] == lab and blocks[-1][1] == i - 1:
            blocks[-1][1] = i
        else:
            blocks.append([i, i, lab])
    _write_rows(out / "corr_blocks.csv", "corrblocks", ["first_index", "last_index", "speaker_label"],
                blocks)
    within, between = block_contrast(r, labels)
    return {"matrix": out / "corr_matrix.csv", "n": len(ids), "within": within,
            "between": between, "r": r, "labels": labels}


def read_corr_matrix(path) -> tuple[list[str], np.ndarray]:
    fields, rows, _ = _read_rows(path, "corrmatrix")
    ids = fields[1:]
    return ids, np.array([[float(row[c]) for c in ids] for row in rows])


# ---------------------------------------------------------------- train-eval

def write_confusion(path, cm) -> None:
    rows = []
    for k, lab in enumerate(cm.labels):
        rows.append([lab] + [int(v) for v in cm.counts[k]] + [_fmt(cm.recall[k])])
    rows.append(["precision"] + [_fmt(v) for v in cm.precision] + [_fmt(cm.accuracy)])
    _write_rows(path, "confusion", ["actual"] + cm.labels + ["recall"], rows)


def read_confusion(path):
    fields, rows, _ = _read_rows(path, "confusion")
    labels = fields[1:-1]
    counts = np.array([[int(r[c]) for c in labels] for r in rows if r["actual"] != "precision"])
    return ConfusionMatrix(labels, counts)


def cmd_train_eval(features_csv, out_dir, cfg: RunConfig, seed: int = 0,
                   model_path=None) -> dict:
    """Split, train, evaluate and persist.

    With ``model_path`` the stored model is evaluated on every row of
    ``features_csv`` and nothing is trained.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids, labels, X = read_features(features_csv)
    if not ids:
        raise PipelineError("feature file has no rows", "train-eval")
    if model_path is not None:
        model = load_model(model_path)
        cm = evaluate(model, X, labels)
        write_confusion(out / "confusion.csv", cm)
        (out / "confusion.txt").write_text(format_table(cm) + "\n")
        return {"accuracy": cm.accuracy, "confusion": cm, "model": Path(model_path)}

    if len(set(labels)) < 2:
        raise PipelineError("features contain fewer than 2 classes", "train-eval")
    try:
        train_idx, test_idx = stratified_holdout(labels, cfg.holdout_ratio, seed, cfg.stratified)
    except ClassifierError as exc:
        raise PipelineError(str(exc), "split") from exc
    try:
        model = train_svm(X[train_idx], [labels[i] for i in train_idx], cfg.svm)
    except ClassifierError as exc:
        raise PipelineError(str(exc), "train") from exc
    cm = evaluate(model, X[test_idx], [labels[i] for i in test_idx])
    save_model(model, out / "model.json")
    _subset_features(features_csv, out / "train_features.csv", {ids[i] for i in train_idx})
    _subset_features(features_csv, out / "test_features.csv", {ids[i] for i in test_idx})
    write_confusion(out / "confusion.csv", cm)
    (out / "confusion.txt").write_text(format_table(cm) + "\n")
    return {"accuracy": cm.accuracy, "confusion": cm, "model": out / "model.json",
            "converged": model.converged, "n_train": int(train_idx.size),
            "n_test": int(test_idx.size)}


# -------------------------------------------------------------------- report

def cmd_report(manifest_path, out_dir, cfg: RunConfig, seed: int = 0, jobs: int = 1) -> dict:
    """Run analyze, corrmatrix and train-eval end to end and write ``report.json``."""
    out = Path(out_dir)
    manifest = read_manifest(manifest_path)
    analysis = cmd_analyze(manifest, cfg.mfdfa, out, jobs)
    corr = cmd_corrmatrix(analysis["spectra"], out, cfg.grid_size)
    te = cmd_train_eval(analysis["features"], out, cfg, seed)
    cm = te["confusion"]
    report = {
        "schema": "mfspeak-run-report",
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "seed": seed,
        "manifest": str(manifest_path),
        "config": cfg.snapshot(),
        "config_hash": config_hash(cfg.mfdfa),
        "features": "features.csv",
        "n_clips": len(manifest),
        "n_failed": analysis["n_failed"],
        "correlation_matrix": "corr_matrix.csv",
        "mean_within_class_correlation": corr["within"],
        "mean_between_class_correlation": corr["between"],
        "confusion": {"labels": cm.labels, "counts": cm.counts.tolist()},
        "accuracy": cm.accuracy,
        "svm_converged": te["converged"],
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "report.txt").write_text(
        f"clips analysed: {analysis['n_ok']} ok, {analysis['n_failed']} failed\n"
        f"correlation: within-class {corr['within']:.4f}, between-class {corr['between']:.4f}\n"
        f"hold-out accuracy: {cm.accuracy:.4f} ({te['n_train']} train / {te['n_test']} test)\n\n"
        + format_table(cm) + "\n"
    )
    report["n_ok"] = analysis["n_ok"]
    return report


# ------------------------------------------------------- in-memory experiment

def surrogate_experiment(seed: int = 0, cfg: RunConfig | None = None, n_classes: int = 5,
                         clips_per_class: int = 20) -> dict:
    """Synthetic corpus -> MFDFA features -> hold-out SVM, without touching disk."""
    cfg = RunConfig() if cfg is None else cfg
    labels, X, spectra = [], [], []
    for label, ts in make_synthetic_corpus(n_classes, clips_per_class, seed):
        res = run_mfdfa(ts, cfg.mfdfa)
        fv = extract_features(res.spectrum, res.fit.width)
        labels.append(label)
        X.append(fv.as_array())
        spectra.append(res.spectrum)
    X = np.array(X)
    train_idx, test_idx = stratified_holdout(labels, cfg.holdout_ratio, seed, cfg.stratified)
    model = train_svm(X[train_idx], [labels[i] for i in train_idx], cfg.svm)
    cm = evaluate(model, X[test_idx], [labels[i] for i in test_idx])
    return {"accuracy": cm.accuracy, "confusion": cm, "labels": labels, "X": X,
            "spectra": spectra, "model": model, "train_idx": train_idx, "test_idx": test_idx}
