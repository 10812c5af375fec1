"""INI-style configuration files for the analysis and the classifier.

Example::

    [mfdfa]
    q_min = -5
    q_max = 5
    q_step = 0.25
    # q_grid = -5, -3, -1, 0, 1, 3, 5   (explicit list; overrides q_min/q_max/q_step)
    scale_min = 16
    scale_max = auto          # floor(N/4)
    scale_count = 20          # used when scale_spacing = log
    scale_spacing = dyadic    # dyadic | log
    detrend_order = 1
    use_both_ends = true
    fit_cutoff = none

    [svm]
    C = 100
    gamma = auto
    tolerance = 1e-3
    max_passes = 10000
    holdout_ratio = 0.25
    stratified = true
    grid_size = 128
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import SvmParams
from .mfdfa import ConfigError, MfdfaConfig

MFDFA_KEYS = ("q_min", "q_max", "q_step", "q_grid", "scale_min", "scale_max", "scale_count",
              "scale_spacing", "detrend_order", "use_both_ends", "fit_cutoff")
SVM_KEYS = ("C", "gamma", "tolerance", "max_passes", "holdout_ratio", "stratified", "grid_size")


@dataclass(frozen=True)
class RunConfig:
    mfdfa: MfdfaConfig = field(default_factory=MfdfaConfig)
    svm: SvmParams = field(default_factory=SvmParams)
    holdout_ratio: float = 0.25
    stratified: bool = True
    grid_size: int = 128

    def snapshot(self) -> dict:
        return {
            "mfdfa": asdict(self.mfdfa),
            "svm": asdict(self.svm),
            "holdout_ratio": self.holdout_ratio,
            "stratified": self.stratified,
            "grid_size": self.grid_size,
        }


def q_range(q_min: float, q_max: float, q_step: float) -> tuple[float, ...]:
    if not q_step > 0 or not q_max > q_min:
        raise ConfigError(f"bad q range {q_min}:{q_max}:{q_step}")
    n = int(round((q_max - q_min) / q_step))
    # round to kill accumulated drift so q = 0 lands exactly on zero
    return tuple(float(v) for v in np.round(q_min + q_step * np.arange(n + 1), 12))


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _optional(text, cast):
    if text is None:
        return None
    if str(text).strip().lower() in ("none", "auto", ""):
        return None
    return cast(text)


def build_config(values: dict) -> RunConfig:
    """Build a RunConfig from flat string or typed values; missing keys keep defaults."""
    unknown = set(values) - set(MFDFA_KEYS) - set(SVM_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    base = MfdfaConfig()
    m = {}
    if values.get("q_grid") is not None:
        raw = values["q_grid"]
        if isinstance(raw, str):
            raw = [v for v in raw.replace(",", " ").split()]
        m["q_grid"] = tuple(float(v) for v in raw)
    elif any(values.get(k) is not None for k in ("q_min", "q_max", "q_step")):
        q = np.asarray(base.q_grid)
        m["q_grid"] = q_range(
            float(values.get("q_min") if values.get("q_min") is not None else q[0]),
            float(values.get("q_max") if values.get("q_max") is not None else q[-1]),
            float(values.get("q_step") if values.get("q_step") is not None else 0.25),
        )
    for key, cast in (("scale_min", int), ("scale_count", int), ("detrend_order", int),
                      ("scale_spacing", str)):
        if values.get(key) is not None:
            m[key] = cast(values[key])
    if "scale_max" in values and values["scale_max"] is not None:
        m["scale_max"] = _optional(values["scale_max"], int)
    if "fit_cutoff" in values and values["fit_cutoff"] is not None:
        m["fit_cutoff"] = _optional(values["fit_cutoff"], float)
    if values.get("use_both_ends") is not None:
        m["use_both_ends"] = _bool(values["use_both_ends"])
    mfdfa = replace(base, **m)

    s = {}
    if values.get("C") is not None:
        s["C"] = float(values["C"])
    if values.get("gamma") is not None:
        g = str(values["gamma"]).strip()
        s["gamma"] = "auto" if g.lower() == "auto" else float(g)
    if values.get("tolerance") is not None:
        s["tolerance"] = float(values["tolerance"])
    if values.get("max_passes") is not None:
        s["max_passes"] = int(values["max_passes"])
    svm = SvmParams(**s)

    cfg = RunConfig(mfdfa, svm)
    extra = {}
    if values.get("holdout_ratio") is not None:
        extra["holdout_ratio"] = float(values["holdout_ratio"])
    if values.get("stratified") is not None:
        extra["stratified"] = _bool(values["stratified"])
    if values.get("grid_size") is not None:
        extra["grid_size"] = int(values["grid_size"])
    return replace(cfg, **extra)


def read_config_values(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep "C" distinct from "c"
    path = Path(path)
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    values = {}
    for section in parser.sections():
        if section not in ("mfdfa", "svm"):
            raise ConfigError(f"{path}: unknown section [{section}]")
        values.update(dict(parser[section]))
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = read_config_values(path) if path is not None else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return build_config(values)


def write_config(cfg: RunConfig, path) -> None:
    m = cfg.mfdfa
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["mfdfa"] = {
        "q_grid": ", ".join(repr(q) for q in m.q_grid),
        "scale_min": str(m.scale_min),
        "scale_max": "auto" if m.scale_max is None else str(m.scale_max),
        "scale_count": str(m.scale_count),
        "scale_spacing": m.scale_spacing,
        "detrend_order": str(m.detrend_order),
        "use_both_ends": str(m.use_both_ends).lower(),
        "fit_cutoff": "none" if m.fit_cutoff is None else repr(m.fit_cutoff),
    }
    parser["svm"] = {
        "C": repr(cfg.svm.C),
        "gamma": cfg.svm.gamma if isinstance(cfg.svm.gamma, str) else repr(cfg.svm.gamma),
        "tolerance": repr(cfg.svm.tolerance),
        "max_passes": str(cfg.svm.max_passes),
        "holdout_ratio": repr(cfg.holdout_ratio),
        "stratified": str(cfg.stratified).lower(),
        "grid_size": str(cfg.grid_size),
    }
    with open(path, "w") as fh:
        parser.write(fh)


def config_hash(cfg: MfdfaConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
