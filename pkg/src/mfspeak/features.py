"""Classification features and cross-correlation of singularity spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mfdfa import SingularitySpectrum


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedSpectrum:
    alphas: np.ndarray
    masses: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    feature1: float
    feature2: float
    aux_width: float = float("nan")
    clip_id: str = ""
    speaker_label: str = ""

    def as_array(self) -> np.ndarray:
        return np.array([self.feature1, self.feature2])


def normalize_spectrum(spec: SingularitySpectrum) -> NormalizedSpectrum:
    """Turn f(alpha) into a probability mass over alpha.

    Negative f values are floored to zero first.
    """
    f = np.maximum(np.asarray(spec.f, dtype=np.float64), 0.0)
    total = f.sum()
    if not total > 0:
        raise FeatureError("spectrum has no positive f(alpha) value; cannot normalize")
    return NormalizedSpectrum(np.asarray(spec.alpha, dtype=np.float64).copy(), f / total)


def _sorted(ns: NormalizedSpectrum) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(ns.alphas, kind="stable")
    return ns.alphas[order], ns.masses[order]


def weighted_median(ns: NormalizedSpectrum) -> float:
    """Smallest alpha whose cumulative mass reaches one half."""
    alphas, masses = _sorted(ns)
    cdf = np.cumsum(masses)
    # guard against 0.49999999 from rounding in the cumulative sum
    idx = int(np.searchsorted(cdf, 0.5 - 1e-12, side="left"))
    return float(alphas[min(idx, alphas.size - 1)])


def spectrum_mode(ns: NormalizedSpectrum) -> float:
    """argmax of the mass function; ties go to the smallest alpha."""
    alphas, masses = _sorted(ns)
    return float(alphas[int(np.argmax(masses))])


def feature_median_minus_mode(ns: NormalizedSpectrum) -> float:
    return weighted_median(ns) - spectrum_mode(ns)


def feature_skewness(ns: NormalizedSpectrum) -> float:
    """Third standardized moment of alpha under the mass function."""
    a, w = ns.alphas, ns.masses
    mu = np.sum(a * w)
    var = np.sum((a - mu) ** 2 * w)
    if not var > 1e-300:
        raise FeatureError("skewness undefined: spectrum mass sits on a single alpha")
    return float(np.sum(((a - mu) / np.sqrt(var)) ** 3 * w))


def extract_features(spec: SingularitySpectrum, width: float = float("nan"),
                     clip_id: str = "", speaker_label: str = "") -> FeatureVector:
    ns = normalize_spectrum(spec)
    return FeatureVector(
        feature_median_minus_mode(ns), feature_skewness(ns), float(width), clip_id, speaker_label
    )


def resample_to_common_grid(specs, grid_size: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate every spectrum onto one alpha grid.

    The grid spans the union of all alpha ranges; outside its own support a
    spectrum is zero. Returns ``(grid, vectors)`` with one row per spectrum.
    """
    if grid_size < 8:
        raise FeatureError(f"grid_size must be >= 8, got {grid_size}")
    if len(specs) == 0:
        raise FeatureError("no spectra to resample")
    for i, sp in enumerate(specs):
        if len(sp.alpha) < 3:
            raise FeatureError(f"spectrum {i} has fewer than 3 points")
    lo = min(float(np.min(sp.alpha)) for sp in specs)
    hi = max(float(np.max(sp.alpha)) for sp in specs)
    if not hi > lo:
        raise FeatureError("alpha ranges of all spectra collapse to a single point")
    grid = np.linspace(lo, hi, grid_size)
    out = np.empty((len(specs), grid_size))
    for i, sp in enumerate(specs):
        order = np.argsort(sp.alpha, kind="stable")
        a, f = np.asarray(sp.alpha)[order], np.asarray(sp.f)[order]
        out[i] = np.interp(grid, a, f, left=0.0, right=0.0)
    return grid, out


def cross_correlation_matrix(aligned, labels=None) -> np.ndarray:
    """Pearson correlation between every pair of rows."""
    x = np.asarray(aligned, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise FeatureError("need at least 2 equal-length vectors")
    centred = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centred * centred, axis=1))
    for i, nrm in enumerate(norms):
        if not nrm > 0:
            name = labels[i] if labels is not None else str(i)
            raise FeatureError(f"vector {name} has zero variance")
    unit = centred / norms[:, None]
    r = unit @ unit.T
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return np.clip(r, -1.0, 1.0)


def block_contrast(r: np.ndarray, labels) -> tuple[float, float]:
    """Mean within-class and mean between-class off-diagonal correlation.

    A side with no pairs (one class, or singleton classes) comes back as NaN.
    """
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    within = r[same & ~np.eye(labels.size, dtype=bool)]
    between = r[~same]
    return (float(within.mean()) if within.size else float("nan"),
            float(between.mean()) if between.size else float("nan"))
