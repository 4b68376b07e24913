"""Clock-time volume series at a fixed depth and their statistics.

Covers interval averaging of per-event volumes, the density of log volume,
lognormal body and power-law left-tail fits, the autocorrelation function
and detrended fluctuation analysis (DFA).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._regression import ols_line
from ._validation import check_range, check_series, split_positive
from .book import ShapeSnapshot
from .orderflow import SessionConfig

__all__ = [
    "VolumeSeries",
    "IntervalAverager",
    "LogPdf",
    "LognormalFit",
    "PowerLawTailFit",
    "DetrendedFluctuation",
    "minute_average_volumes",
    "empirical_log_pdf",
    "fit_lognormal",
    "fit_left_tail_powerlaw",
    "autocorrelation",
    "acf_decay_exponent",
    "dfa",
    "box_sizes",
]


@dataclass(frozen=True)
class VolumeSeries:
    """Mean volume per clock interval at one depth.

    ``index`` holds the interval numbers that saw at least one event and
    ``values`` their means, so ``values`` is the gap-free series; intervals
    without events are listed in ``gaps``.
    """

    delta: int
    dt: float
    index: np.ndarray
    values: np.ndarray
    gaps: tuple = ()
    counts: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def positive(self) -> tuple[np.ndarray, int]:
        """Values with zeros removed, and how many zeros were removed."""
        return split_positive(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["interval_index", "value"])
            for i, v in zip(self.index, self.values):
                w.writerow([int(i), repr(float(v))])

    @classmethod
    def from_csv(cls, path, delta: int = 0, dt: float = 60.0) -> "VolumeSeries":
        index, values = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                index.append(int(row["interval_index"]))
                values.append(float(row["value"]))
        index = np.array(index, dtype=int)
        if index.size and np.any(np.diff(index) <= 0):
            raise ValueError(f"{path}: interval_index must be strictly increasing")
        gaps = ()
        if index.size:
            gaps = tuple(sorted(set(range(index[0], index[-1] + 1)) - set(index.tolist())))
        return cls(delta, dt, index, np.array(values, dtype=float), gaps)


class IntervalAverager:
    """Accumulates per-event volumes into clock intervals of ``dt`` seconds.

    Interval k of a session window starting at ``a`` covers
    ``(a + k dt, a + (k+1) dt]``; an event exactly at ``a`` joins interval 0.
    Intervals are numbered consecutively across windows. Events outside
    every window are counted in ``outside`` and ignored.
    """

    def __init__(self, dt: float = 60.0, session: Optional[SessionConfig] = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self._dt_cs = self.dt * 100.0
        windows = session.session_windows if session is not None else ()
        self._windows = []
        offset = 0
        for a, b in windows:
            n = max(1, math.ceil((b - a) / self._dt_cs))
            self._windows.append((a, b, offset, n))
            offset += n
        self.n_intervals = offset if self._windows else None
        self._sum: dict[int, int] = {}
        self._count: dict[int, int] = {}
        self.outside = 0

    def interval_of(self, wall_time: int) -> Optional[int]:
        if not self._windows:
            return max(0, math.ceil(wall_time / self._dt_cs) - 1)
        for a, b, offset, n in self._windows:
            if a <= wall_time <= b:
                k = max(0, math.ceil((wall_time - a) / self._dt_cs) - 1)
                return offset + min(k, n - 1)
        return None

    def add(self, wall_time: int, volume: int) -> None:
        k = self.interval_of(wall_time)
        if k is None:
            self.outside += 1
            return
        self._sum[k] = self._sum.get(k, 0) + int(volume)
        self._count[k] = self._count.get(k, 0) + 1

    def series(self, delta: int = 0) -> VolumeSeries:
        seen = sorted(self._count)
        if self.n_intervals is not None:
            universe = range(self.n_intervals)
        elif seen:
            universe = range(seen[0], seen[-1] + 1)
        else:
            universe = range(0)
        gaps = tuple(k for k in universe if k not in self._count)
        values = np.array([self._sum[k] / self._count[k] for k in seen], dtype=float)
        counts = np.array([self._count[k] for k in seen], dtype=np.int64)
        return VolumeSeries(int(delta), self.dt, np.array(seen, dtype=int), values, gaps, counts)


def minute_average_volumes(
    snapshots: Iterable[ShapeSnapshot],
    delta: int,
    dt: float = 60.0,
    session: Optional[SessionConfig] = None,
) -> VolumeSeries:
    """Mean of V(delta, t_i) over the events falling in each clock interval."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    acc = IntervalAverager(dt, session)
    for snap in snapshots:
        if snap.wall_time is None:
            raise ValueError("snapshot has no wall time")
        v = 0 if snap.empty or delta > snap.depth else int(snap.volumes[delta - 1])
        acc.add(snap.wall_time, v)
    return acc.series(delta)


def _values_of(series) -> tuple[np.ndarray, int]:
    """Positive values of a VolumeSeries (zeros dropped) or of a raw array."""
    if isinstance(series, VolumeSeries):
        return series.positive()
    return split_positive(series)


@dataclass(frozen=True)
class LogPdf:
    """Histogram density of ln v on equal-width bins."""

    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    n_dropped: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ln_v_lo", "ln_v_hi", "count", "density"])
            for lo, hi, c, d in zip(self.edges[:-1], self.edges[1:], self.counts, self.density):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(d))])


def empirical_log_pdf(series, bins: Union[int, str, Sequence[float]] = "fd") -> LogPdf:
    """Density of ln v. Zero values are dropped and counted.

    ``bins`` is passed to :func:`numpy.histogram`; the default is the
    Freedman-Diaconis rule.
    """
    v, dropped = _values_of(series)
    if v.size < 2:
        raise ValueError(f"need at least 2 positive values, got {v.size}")
    x = np.log(v)
    if isinstance(bins, str) and np.ptp(x) == 0:
        bins = 1
    counts, edges = np.histogram(x, bins=bins)
    density = counts / (counts.sum() * np.diff(edges))
    return LogPdf(edges, density, counts, dropped)


class LognormalFit(BaseEstimator):
    """Maximum-likelihood lognormal: mean and (population) std of ln v.

    Attributes
    ----------
    mu_, sigma_ : float
    ks_distance_, ks_pvalue_ : float
        Kolmogorov-Smirnov statistic of ln v against Normal(mu_, sigma_).
    n_samples_, n_dropped_ : int
    """

    min_samples = 30

    def fit(self, X, y=None):
        v, dropped = _values_of(X)
        if v.size < self.min_samples:
            raise ValueError(f"need at least {self.min_samples} positive values, got {v.size}")
        x = np.log(v)
        mu = float(x.mean())
        sigma = float(x.std())
        if sigma == 0.0 or np.ptp(x) == 0:
            raise ValueError("degenerate sample: all values are equal")
        ks = stats.kstest(x, "norm", args=(mu, sigma))
        self.mu_ = mu
        self.sigma_ = sigma
        self.ks_distance_ = float(ks.statistic)
        self.ks_pvalue_ = float(ks.pvalue)
        self.n_samples_ = int(v.size)
        self.n_dropped_ = dropped
        return self

    def log_pdf(self, ln_v) -> np.ndarray:
        """Density of ln v (normal)."""
        check_is_fitted(self, "mu_")
        x = np.asarray(ln_v, dtype=float)
        return stats.norm.pdf(x, self.mu_, self.sigma_)

    def pdf(self, v) -> np.ndarray:
        """Density of v itself: f(ln v) / v."""
        v = np.asarray(v, dtype=float)
        return self.log_pdf(np.log(v)) / v

    def score_samples(self, X) -> np.ndarray:
        v = check_series(X, name="values")
        return np.log(self.pdf(v))

    def report(self) -> dict:
        check_is_fitted(self, "mu_")
        return {
            "mu": self.mu_,
            "sigma": self.sigma_,
            "ks_distance": self.ks_distance_,
            "ks_pvalue": self.ks_pvalue_,
            "n": self.n_samples_,
            "n_dropped": self.n_dropped_,
        }


def fit_lognormal(series) -> LognormalFit:
    return LognormalFit().fit(series)


class PowerLawTailFit(BaseEstimator):
    """OLS of ln f(ln v) on ln v over a window given in log10 v.

    ``fit`` takes either a :class:`LogPdf` or bin centres (in ln v) and
    densities. Empty bins are skipped. The slope is the exponent of
    ``f(ln v) ~ v**beta``.
    """

    def __init__(self, fit_range=None):
        self.fit_range = fit_range

    def fit(self, X, y=None):
        lo, hi = check_range(self.fit_range)
        if isinstance(X, LogPdf):
            x, f = X.centers, X.density
        else:
            x = check_series(X, name="ln_v")
            f = check_series(y, name="density")
        ln10 = math.log(10.0)
        mask = (x >= lo * ln10) & (x <= hi * ln10) & (f > 0)
        if mask.sum() < 3:
            raise ValueError(
                f"fewer than 3 occupied bins in log10 v range ({lo}, {hi}): {int(mask.sum())}"
            )
        line = ols_line(x[mask], np.log(f[mask]))
        self.beta_ = line.slope
        self.beta_stderr_ = line.slope_stderr
        self.intercept_ = line.intercept
        self.r_squared_ = line.r_squared
        self.fit_range_ = (lo, hi)
        self.n_bins_ = int(mask.sum())
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "beta_")
        x = check_series(X, name="ln_v")
        return np.exp(self.intercept_ + self.beta_ * x)

    def report(self) -> dict:
        check_is_fitted(self, "beta_")
        return {
            "beta": self.beta_,
            "stderr": self.beta_stderr_,
            "range": list(self.fit_range_),
            "r2": self.r_squared_,
            "n_bins": self.n_bins_,
        }


def fit_left_tail_powerlaw(pdf: LogPdf, fit_range) -> PowerLawTailFit:
    return PowerLawTailFit(fit_range=fit_range).fit(pdf)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation ``C(0..max_lag)``, with ``C(0) = 1``."""
    x = check_series(series.values if isinstance(series, VolumeSeries) else series)
    n = x.size
    max_lag = int(max_lag)
    if max_lag < 1 or n <= max_lag:
        raise ValueError(f"need 1 <= max_lag < n, got max_lag={max_lag}, n={n}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0.0:
        raise ValueError("zero-variance series")
    nfft = 1 << (2 * n - 1).bit_length()
    ft = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(ft * np.conj(ft), nfft)[: max_lag + 1]
    c = acov / denom
    c[0] = 1.0
    return c


def acf_decay_exponent(series, lag_range=(10, 100)) -> tuple[float, float]:
    """Slope fit of ``log C(l) = const - gamma log l``; returns ``(gamma, stderr)``.

    Non-positive autocorrelations inside the window are skipped.
    """
    lo, hi = (int(v) for v in lag_range)
    c = autocorrelation(series, hi)
    lags = np.arange(lo, hi + 1)
    vals = c[lo : hi + 1]
    keep = vals > 0
    line = ols_line(np.log(lags[keep]), np.log(vals[keep]))
    return -line.slope, line.slope_stderr


def box_sizes(n: int, min_box: int = 8, max_box: Optional[int] = None, ratio: float = 2 ** 0.25):
    """Geometric grid of integer box sizes from ``min_box`` to ``max_box`` (default n // 4)."""
    max_box = n // 4 if max_box is None else int(max_box)
    if ratio <= 1:
        raise ValueError("ratio must exceed 1")
    if min_box < 2 or max_box < min_box:
        raise ValueError(f"invalid box range [{min_box}, {max_box}] for n={n}")
    k_max = int(math.floor(math.log(max_box / min_box) / math.log(ratio) + 1e-9))
    sizes = np.unique(np.round(min_box * ratio ** np.arange(k_max + 1)).astype(int))
    return sizes[(sizes >= min_box) & (sizes <= max_box)]


def _central_decade(sizes: np.ndarray) -> tuple[int, int]:
    lmin, lmax = math.log10(sizes[0]), math.log10(sizes[-1])
    if lmax - lmin <= 1.0:
        return int(sizes[0]), int(sizes[-1])
    mid = 0.5 * (lmin + lmax)
    return int(math.ceil(10 ** (mid - 0.5) - 1e-9)), int(math.floor(10 ** (mid + 0.5) + 1e-9))


class DetrendedFluctuation(BaseEstimator):
    """Detrended fluctuation analysis.

    The profile (cumulative sum of the demeaned series) is cut into
    ``n // l`` non-overlapping boxes from the start and as many again from
    the end. A polynomial of degree ``order`` is removed from each box by
    least squares, and ``F(l)`` is the root-mean-square residual over all
    boxes. The Hurst index is the OLS slope of log F on log l.

    Parameters
    ----------
    min_box : int
    max_box : int, optional
        Defaults to a quarter of the series length.
    ratio : float
        Geometric spacing of box sizes.
    order : int
        Detrending polynomial degree (1 is DFA1).
    fit_range : (int, int), optional
        Box sizes used for the slope; defaults to the central decade of the grid.

    Attributes
    ----------
    box_sizes_, fluctuation_ : ndarray
    hurst_, hurst_stderr_ : float
    gamma_ : float
        Implied autocorrelation decay exponent ``2 - 2 H``.
    fit_range_ : tuple of int
    """

    def __init__(self, min_box=8, max_box=None, ratio=2 ** 0.25, order=1, fit_range=None):
        self.min_box = min_box
        self.max_box = max_box
        self.ratio = ratio
        self.order = order
        self.fit_range = fit_range

    def fit(self, X, y=None):
        x = check_series(X.values if isinstance(X, VolumeSeries) else X)
        n = x.size
        if n < 4 * self.min_box:
            raise ValueError(f"series of length {n} is too short for min_box={self.min_box}")
        sizes = box_sizes(n, self.min_box, self.max_box, self.ratio)
        profile = np.cumsum(x - x.mean())
        F = np.array([self._fluctuation(profile, int(l)) for l in sizes])

        lo, hi = _central_decade(sizes) if self.fit_range is None else self.fit_range
        mask = (sizes >= lo) & (sizes <= hi) & (F > 0)
        if mask.sum() < 3:
            raise ValueError(f"fewer than 3 box sizes inside fit range ({lo}, {hi})")
        line = ols_line(np.log(sizes[mask]), np.log(F[mask]))
        self.box_sizes_ = sizes
        self.fluctuation_ = F
        self.hurst_ = line.slope
        self.hurst_stderr_ = line.slope_stderr
        self.gamma_ = 2.0 - 2.0 * line.slope
        self.fit_range_ = (int(lo), int(hi))
        self.n_samples_ = n
        return self

    def _fluctuation(self, profile: np.ndarray, ell: int) -> float:
        n = profile.size
        nb = n // ell
        head = profile[: nb * ell].reshape(nb, ell)
        tail = profile[n - nb * ell :].reshape(nb, ell)
        boxes = np.vstack([head, tail])
        t = np.linspace(-1.0, 1.0, ell)
        q, _ = np.linalg.qr(np.vander(t, self.order + 1))
        resid = boxes - (boxes @ q) @ q.T
        return float(np.sqrt(np.mean(resid * resid)))

    def report(self) -> dict:
        check_is_fitted(self, "hurst_")
        return {
            "H": self.hurst_,
            "stderr": self.hurst_stderr_,
            "gamma": self.gamma_,
            "fit_range": list(self.fit_range_),
            "order": int(self.order),
            "n": self.n_samples_,
        }

    def to_csv(self, path) -> None:
        check_is_fitted(self, "hurst_")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ell", "F"])
            for l, f in zip(self.box_sizes_, self.fluctuation_):
                w.writerow([int(l), repr(float(f))])


def dfa(series, **params) -> DetrendedFluctuation:
    return DetrendedFluctuation(**params).fit(series)
