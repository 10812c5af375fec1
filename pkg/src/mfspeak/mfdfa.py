"""Multifractal detrended fluctuation analysis.

The chain is profile -> detrended window variances -> q-order fluctuation
function -> generalized Hurst exponents h(q) -> tau(q) -> singularity
spectrum (alpha, f(alpha)) -> quadratic fit and spectrum width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .signal_io import TimeSeries


def default_q_grid() -> tuple[float, ...]:
    return tuple(float(q) for q in np.arange(-20, 21) * 0.25)


class MfdfaError(ValueError):
    """Raised by any MFDFA stage; ``stage`` names where it happened."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(MfdfaError):
    pass


class DegenerateWindowError(MfdfaError):
    def __init__(self, message: str, scale: int | None = None, stage: str | None = None):
        super().__init__(message, stage)
        self.scale = scale


class WidthUndefinedError(MfdfaError):
    def __init__(self, message: str, coefficients: tuple[float, float, float], stage: str | None = None):
        super().__init__(message, stage)
        self.coefficients = coefficients


@dataclass(frozen=True)
class MfdfaConfig:
    """Analysis grid. ``scale_max=None`` means floor(N/4) of the analysed series.

    ``scale_spacing="dyadic"`` uses powers of two times ``scale_min`` (the
    ``scale_count`` setting is then unused); ``"log"`` uses ``scale_count``
    geometrically spaced integers, deduplicated after rounding.

    ``fit_cutoff`` restricts the quadratic fit to spectrum points with
    f >= fit_cutoff * max(f); ``None`` fits every point.
    """

    q_grid: tuple[float, ...] = field(default_factory=default_q_grid)
    scale_min: int = 16
    scale_max: int | None = None
    scale_count: int = 20
    detrend_order: int = 1
    use_both_ends: bool = True
    scale_spacing: str = "dyadic"
    fit_cutoff: float | None = None

    def __post_init__(self):
        q = np.asarray(self.q_grid, dtype=np.float64)
        object.__setattr__(self, "q_grid", tuple(float(v) for v in q))
        if q.size == 0 or not np.all(np.isfinite(q)):
            raise ConfigError("q_grid must be a nonempty finite sequence")
        if np.any(np.diff(q) <= 0):
            raise ConfigError("q_grid must be strictly increasing")
        if self.detrend_order < 0:
            raise ConfigError(f"detrend_order must be >= 0, got {self.detrend_order}")
        if self.scale_min < self.detrend_order + 2:
            raise ConfigError(
                f"scale_min={self.scale_min} must be >= detrend_order + 2 = {self.detrend_order + 2}"
            )
        if self.scale_count < 4:
            raise ConfigError(f"scale_count must be >= 4, got {self.scale_count}")
        if self.scale_max is not None and self.scale_max <= self.scale_min:
            raise ConfigError("scale_max must exceed scale_min")
        if self.scale_spacing not in ("dyadic", "log"):
            raise ConfigError(f"scale_spacing must be 'dyadic' or 'log', got {self.scale_spacing!r}")
        if self.fit_cutoff is not None and not 0.0 <= self.fit_cutoff < 1.0:
            raise ConfigError("fit_cutoff must lie in [0, 1)")

    def scales(self, n: int) -> np.ndarray:
        """Window sizes for a series of length ``n``."""
        upper = n // 4 if self.scale_max is None else self.scale_max
        if upper > n // 4:
            raise ConfigError(f"scale_max={upper} exceeds floor(N/4)={n // 4} for N={n}")
        if upper <= self.scale_min:
            raise ConfigError(
                f"series of length {n} too short: floor(N/4)={n // 4} <= scale_min={self.scale_min}"
            )
        if self.scale_spacing == "dyadic":
            sizes = [self.scale_min]
            while sizes[-1] * 2 <= upper:
                sizes.append(sizes[-1] * 2)
            s = np.array(sizes, dtype=np.int64)
        else:
            s = np.geomspace(self.scale_min, upper, self.scale_count)
            s = np.unique(np.round(s).astype(np.int64))
        if s.size < 4:
            raise ConfigError(f"only {s.size} distinct scales in [{self.scale_min}, {upper}]")
        return s


@dataclass(frozen=True)
class Profile:
    values: np.ndarray


@dataclass(frozen=True)
class FluctuationTable:
    scales: np.ndarray
    q_grid: np.ndarray
    values: np.ndarray  # shape (len(q_grid), len(scales))
    window_counts: np.ndarray


@dataclass(frozen=True)
class HurstCurve:
    q: np.ndarray
    h: np.ndarray
    intercept: np.ndarray
    r2: np.ndarray


@dataclass(frozen=True)
class SingularitySpectrum:
    alpha: np.ndarray
    f: np.ndarray
    q: np.ndarray

    def __len__(self):
        return self.alpha.size


@dataclass(frozen=True)
class QuadraticFit:
    A: float
    B: float
    C: float
    alpha0: float
    width: float
    endpoint_width: float


class MfdfaResult(NamedTuple):
    table: FluctuationTable
    hurst: HurstCurve
    spectrum: SingularitySpectrum
    fit: QuadraticFit


def compute_profile(ts: TimeSeries) -> Profile:
    x = ts.samples
    return Profile(np.cumsum(x - x.mean()))


def _projector(s: int, m: int) -> np.ndarray:
    # centred, scaled abscissa keeps the Vandermonde matrix well conditioned
    t = (np.arange(s, dtype=np.float64) - (s - 1) / 2.0) / s
    q, _ = np.linalg.qr(np.vander(t, m + 1))
    return q


def local_fluctuations(p: Profile, s: int, m: int = 1, use_both_ends: bool = True) -> np.ndarray:
    """Variance of the profile around a degree-``m`` polynomial in each window of ``s`` samples.

    Windows tile the profile from the start; with ``use_both_ends`` a second
    tiling from the end is appended so the tail remainder is covered.
    """
    y = np.asarray(p.values, dtype=np.float64)
    n = y.size
    if s < m + 1:
        raise ConfigError(f"scale {s} cannot determine a degree-{m} fit")
    ns = n // s
    if ns < 1:
        raise ConfigError(f"scale {s} exceeds series length {n}")
    windows = y[: ns * s].reshape(ns, s)
    if use_both_ends:
        # second tiling numbered backwards from the series end
        windows = np.vstack([windows, y[n - ns * s:].reshape(ns, s)[::-1]])
    basis = _projector(s, m)
    resid = windows - (windows @ basis) @ basis.T
    return np.mean(resid * resid, axis=1)


def _check_windows(f2: np.ndarray, q_min: float, scale) -> None:
    if f2.size == 0:
        raise DegenerateWindowError(f"no windows at scale {scale}", scale)
    if np.any(f2 < 0):
        raise MfdfaError(f"negative window variance at scale {scale}")
    if np.all(f2 == 0):
        raise DegenerateWindowError(f"all windows have zero variance at scale {scale}", scale)
    if q_min <= 0 and np.any(f2 == 0):
        raise DegenerateWindowError(
            f"zero-variance window at scale {scale} with q={q_min}", scale
        )


def _qorder_means(f2: np.ndarray, q: np.ndarray) -> np.ndarray:
    # q = 0 is the limit of the generalized mean: a geometric mean of F
    out = np.empty(q.size)
    zero = q == 0
    if zero.any():
        out[zero] = np.exp(0.5 * np.mean(np.log(f2)))
    nz = ~zero
    if nz.any():
        qn = q[nz]
        out[nz] = np.mean(f2[None, :] ** (qn[:, None] / 2.0), axis=1) ** (1.0 / qn)
    return out


def fluctuation_function(f2, q: float, scale: int | None = None) -> float:
    """q-order mean of the window fluctuations, F_q(s)."""
    f2 = np.asarray(f2, dtype=np.float64)
    _check_windows(f2, q, scale)
    return float(_qorder_means(f2, np.array([float(q)]))[0])


def fluctuation_table(p: Profile, cfg: MfdfaConfig) -> FluctuationTable:
    scales = cfg.scales(p.values.size)
    q_grid = np.asarray(cfg.q_grid)
    values = np.empty((q_grid.size, scales.size))
    counts = np.empty(scales.size, dtype=np.int64)
    for j, s in enumerate(scales):
        f2 = local_fluctuations(p, int(s), cfg.detrend_order, cfg.use_both_ends)
        _check_windows(f2, q_grid[0], int(s))
        counts[j] = f2.size
        values[:, j] = _qorder_means(f2, q_grid)
    return FluctuationTable(scales, q_grid, values, counts)


def hurst_exponents(tbl: FluctuationTable) -> HurstCurve:
    """Least-squares slope of ln F_q(s) against ln s for every q."""
    if tbl.scales.size < 4:
        raise ConfigError("at least 4 scales are needed for the log-log regression")
    if np.any(~(tbl.values > 0)) or not np.all(np.isfinite(tbl.values)):
        raise MfdfaError("fluctuation table has non-positive or non-finite entries")
    x = np.log(tbl.scales.astype(np.float64))
    y = np.log(tbl.values)
    xc = x - x.mean()
    sxx = np.sum(xc * xc)
    if sxx == 0:
        raise ConfigError("all scales are equal")
    ybar = y.mean(axis=1)
    slope = (y - ybar[:, None]) @ xc / sxx
    intercept = ybar - slope * x.mean()
    resid = y - (intercept[:, None] + slope[:, None] * x)
    ss_res = np.sum(resid * resid, axis=1)
    ss_tot = np.sum((y - ybar[:, None]) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    return HurstCurve(tbl.q_grid.copy(), slope, intercept, r2)


def scaling_exponents(h: HurstCurve) -> tuple[np.ndarray, np.ndarray]:
    """Mass exponents tau(q) = q h(q) - 1."""
    return h.q.copy(), h.q * h.h - 1.0


def singularity_spectrum(h: HurstCurve) -> SingularitySpectrum:
    """Legendre transform of h(q) with h'(q) from finite differences.

    Central differences in the interior, first-order one-sided at the ends.
    """
    if h.q.size < 3:
        raise MfdfaError("at least 3 q values are needed to estimate h'(q)")
    dh = np.gradient(h.h, h.q)
    alpha = h.h + h.q * dh
    f = h.q * (alpha - h.h) + 1.0
    return SingularitySpectrum(alpha, f, h.q.copy())


def fit_spectrum(spec: SingularitySpectrum, cutoff: float | None = None) -> QuadraticFit:
    """Least-squares parabola through the spectrum around its peak.

    The width is the distance between the two zeros of the fitted parabola.
    A spectrum that collapsed onto a single alpha (monofractal) has width 0.
    """
    alpha = np.asarray(spec.alpha, dtype=np.float64)
    f = np.asarray(spec.f, dtype=np.float64)
    peak = int(np.argmax(f))
    alpha0 = float(alpha[peak])
    endpoint_width = float(alpha.max() - alpha.min())
    if endpoint_width <= 1e-12 * max(1.0, abs(alpha0)):
        return QuadraticFit(0.0, 0.0, float(f[peak]), alpha0, 0.0, endpoint_width)

    keep = np.ones(alpha.size, dtype=bool)
    if cutoff is not None:
        keep = f >= cutoff * f[peak]
    if np.unique(alpha[keep]).size < 3:
        raise MfdfaError("quadratic fit needs at least 3 distinct alpha values")
    u = alpha[keep] - alpha0
    design = np.column_stack([u * u, u, np.ones_like(u)])
    (a, b, c), *_ = np.linalg.lstsq(design, f[keep], rcond=None)
    a, b, c = float(a), float(b), float(c)
    disc = b * b - 4.0 * a * c
    if a >= 0 or disc < 0:
        raise WidthUndefinedError(
            f"fitted parabola A={a:.6g}, B={b:.6g}, C={c:.6g} has no two real zeros",
            (a, b, c),
        )
    return QuadraticFit(a, b, c, alpha0, float(np.sqrt(disc) / -a), endpoint_width)


def run_mfdfa(ts: TimeSeries, cfg: MfdfaConfig | None = None) -> MfdfaResult:
    cfg = MfdfaConfig() if cfg is None else cfg
    if len(ts) < 4 * cfg.scale_min:
        raise ConfigError(
            f"series of {len(ts)} samples is shorter than 4 * scale_min = {4 * cfg.scale_min}",
            stage="config",
        )
    stage = "profile"
    try:
        profile = compute_profile(ts)
        stage = "fluctuation_function"
        table = fluctuation_table(profile, cfg)
        stage = "hurst_exponents"
        hurst = hurst_exponents(table)
        stage = "singularity_spectrum"
        spectrum = singularity_spectrum(hurst)
        stage = "fit_spectrum"
        fit = fit_spectrum(spectrum, cfg.fit_cutoff)
    except MfdfaError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise
    return MfdfaResult(table, hurst, spectrum, fit)

