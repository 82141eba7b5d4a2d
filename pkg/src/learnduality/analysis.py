"""Log-binned histograms and power-law fits of fluctuation magnitudes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyHistogramError, InsufficientDataError

DEFAULT_NBINS = 50
MIN_FIT_BINS = 5


@dataclass
class LogHistogram:
    """Log-spaced histogram of positive magnitudes.

    ``densities`` are normalised by ``n_total`` (all nonzero finite samples,
    inside the window or not), so ``sum(densities * widths)`` is the fraction
    of samples that landed inside the edges.
    """

    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    n_total: int
    n_zero: int
    n_outside: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.edges[:-1] * self.edges[1:])


@dataclass
class PowerLawFit:
    k: float
    intercept: float
    window: tuple[float, float]
    r_squared: float
    stderr_k: float
    n_bins: int
    stderr_k_ols: float = float("nan")

    def density(self, x):
        """Fitted density ``10**intercept * x**-k``."""
        return 10.0**self.intercept * np.asarray(x, dtype=float) ** (-self.k)


def _clean(samples):
    a = np.abs(np.asarray(samples, dtype=float).ravel())
    finite = np.isfinite(a)
    a = a[finite]
    n_zero = int(np.count_nonzero(a == 0.0))
    return a[a > 0.0], n_zero


def log_bin(samples, nbins: int = DEFAULT_NBINS, window=None) -> LogHistogram:
    """Histogram ``|samples|`` into ``nbins`` log-spaced bins over ``window``.

    Zeros and values outside the window are excluded and counted. Without a
    window the full positive range of the data is used.
    """
    a, n_zero = _clean(samples)
    if a.size == 0:
        raise EmptyHistogramError("no nonzero samples")
    lo, hi = (a.min(), a.max()) if window is None else window
    if not 0 < lo < hi:
        raise ValueError(f"window must satisfy 0 < lo < hi, got {(lo, hi)}")
    edges = np.logspace(math.log10(lo), math.log10(hi), nbins + 1)
    edges[0], edges[-1] = lo, hi
    counts, _ = np.histogram(a, edges)
    inside = int(counts.sum())
    if inside == 0:
        raise EmptyHistogramError(f"no samples inside [{lo:g}, {hi:g}]")
    dens = counts / (a.size * np.diff(edges))
    return LogHistogram(edges, counts, dens, int(a.size), n_zero, int(a.size - inside))


def fit_power_law(hist: LogHistogram, window=None) -> PowerLawFit:
    """Ordinary least squares of log density against log bin centre.

    Only nonempty bins lying fully inside ``window`` are used.

    ``stderr_k`` is the heteroscedasticity-consistent (HC3) standard error.
    Poisson noise makes sparse end bins much noisier than the rest, and the
    textbook ``sqrt(SSR / (m - 2) / Sxx)`` (kept as ``stderr_k_ols``)
    understates the scatter of ``k`` when those bins carry leverage.
    """
    lo, hi = (hist.edges[0], hist.edges[-1]) if window is None else window
    use = (hist.counts > 0) & (hist.edges[:-1] >= lo * (1 - 1e-12)) & (
        hist.edges[1:] <= hi * (1 + 1e-12)
    )
    m = int(np.count_nonzero(use))
    if m < MIN_FIT_BINS:
        raise InsufficientDataError(f"only {m} usable bins; need {MIN_FIT_BINS}")
    x = np.log10(hist.centers[use])
    y = np.log10(hist.densities[use])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    if m > 2:
        stderr_ols = math.sqrt(ssr / (m - 2) / sxx)
        lev = 1.0 / m + (x - xm) ** 2 / sxx
        stderr = math.sqrt(float(np.sum((x - xm) ** 2 * (resid / (1.0 - lev)) ** 2)) / sxx**2)
    else:
        stderr = stderr_ols = float("inf")
    return PowerLawFit(
        -float(slope), float(intercept), (float(lo), float(hi)), r2, stderr, m, stderr_ols
    )


def _populated_run(a, nbins, min_count):
    edges = np.logspace(math.log10(a.min()), math.log10(a.max()), nbins + 1)
    counts, _ = np.histogram(a, edges)
    ok = (counts >= min_count).astype(np.int8)
    flips = np.flatnonzero(np.diff(np.r_[0, ok, 0]))
    runs = list(zip(flips[::2], flips[1::2]))
    if not runs:
        raise InsufficientDataError(f"no bin holds {min_count} samples")
    i, j = max(runs, key=lambda r: r[1] - r[0])
    return float(edges[i]), float(edges[j])


def data_support(samples, nbins: int = DEFAULT_NBINS, min_count: int = 10):
    """Longest run of log bins (over the data range) holding ``min_count``."""
    a, _ = _clean(samples)
    if a.size == 0:
        raise EmptyHistogramError("no nonzero samples")
    return _populated_run(a, nbins, min_count)


def central_window(
    samples,
    nbins: int = DEFAULT_NBINS,
    min_count: int = 10,
    trim_decades: float = 0.5,
):
    """Populated span of the data trimmed by ``trim_decades`` at each end."""
    lo, hi = data_support(samples, nbins, min_count)
    f = 10.0**trim_decades
    lo, hi = lo * f, hi / f
    if not lo < hi:
        raise InsufficientDataError("populated span shorter than the trim")
    return lo, hi


def loglog_slope(x, y) -> float:
    """OLS slope of ``log10 y`` against ``log10 x`` over finite positive pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if np.count_nonzero(ok) < 2:
        raise InsufficientDataError("need two positive points for a slope")
    return float(np.polyfit(np.log10(x[ok]), np.log10(y[ok]), 1)[0])


def scaling_exponent_invariance(samples, c: float, window, nbins: int = DEFAULT_NBINS):
    """Fit ``samples`` and ``c * samples`` on correspondingly scaled windows."""
    if c == 0:
        raise ValueError("scale factor must be nonzero")
    lo, hi = window
    a = np.asarray(samples, dtype=float)
    k0 = fit_power_law(log_bin(a, nbins, (lo, hi))).k
    s = abs(c)
    k1 = fit_power_law(log_bin(c * a, nbins, (s * lo, s * hi))).k
    return k0, k1


def moment(samples, m: int) -> float:
    a = np.asarray(samples, dtype=float)
    if a.size == 0:
        raise ValueError("moment of an empty sample")
    return float(np.mean(a**m))


def sample_power_law(
    k: float, lo: float, hi: float, n: int, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """Inverse-CDF draws from the density ``~ x**-k`` on ``[lo, hi]``."""
    rng = np.random.default_rng() if rng is None else rng
    u = rng.random(n)
    if abs(k - 1.0) < 1e-12:
        return lo * (hi / lo) ** u
    e = 1.0 - k
    return (lo**e + u * (hi**e - lo**e)) ** (1.0 / e)
