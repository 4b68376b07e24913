"""Event-time averaged book shape, its dispersion, tail fit and periodic peaks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._regression import ols_line
from ._validation import check_series
from .book import ShapeSnapshot, Side

__all__ = [
    "AveragedShape",
    "ShapeAverager",
    "ExponentialTailFit",
    "PeriodicPeakDetector",
    "average_shape",
    "locate_maximum",
    "fit_exponential_tail",
    "detect_periodic_peaks",
    "default_tail_range",
]

# per-chunk int64 sums of squares stay exact while volumes are below ~1.9e8
_CHUNK = 256


@dataclass(frozen=True)
class AveragedShape:
    """Mean and population std of volume by depth; index 0 is depth 1."""

    V: np.ndarray
    sigma: np.ndarray
    M: int
    side: Optional[Side] = None

    @property
    def delta(self) -> np.ndarray:
        return np.arange(1, len(self.V) + 1)

    @property
    def depth(self) -> int:
        return len(self.V)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "mean_volume", "std_volume"])
            for d, v, s in zip(self.delta, self.V, self.sigma):
                w.writerow([int(d), repr(float(v)), repr(float(s))])

    @classmethod
    def from_csv(cls, path, side=None) -> "AveragedShape":
        delta, V, sigma = [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                delta.append(int(row["delta"]))
                V.append(float(row["mean_volume"]))
                sigma.append(float(row["std_volume"]))
        if delta != list(range(1, len(delta) + 1)):
            raise ValueError(f"{path}: deltas must run 1..D without gaps")
        side = Side.coerce(side) if side is not None else None
        return cls(np.array(V), np.array(sigma), M=0, side=side)


class ShapeAverager(BaseEstimator):
    """Streaming event-time mean and standard deviation of depth profiles.

    Sums of volumes and squared volumes are kept as exact integers, so the
    variance never suffers cancellation however many snapshots are folded in.
    Two averagers merge exactly, which makes partial aggregation order-free.

    Parameters
    ----------
    depth : int, optional
        Profile length. Inferred from the first sample when omitted.
    """

    def __init__(self, depth: Optional[int] = None):
        self.depth = depth

    def _reset(self, depth: int) -> None:
        self.depth_ = int(depth)
        self.n_samples_seen_ = 0
        self._sum = np.array([0] * self.depth_, dtype=object)
        self._sq = np.array([0] * self.depth_, dtype=object)
        self._csum = np.zeros(self.depth_, dtype=np.int64)
        self._csq = np.zeros(self.depth_, dtype=np.int64)
        self._tmp = np.zeros(self.depth_, dtype=np.int64)
        self._pending = 0

    def _flush(self) -> None:
        if self._pending:
            self._sum += self._csum.astype(object)
            self._sq += self._csq.astype(object)
            self._csum[:] = 0
            self._csq[:] = 0
            self._pending = 0

    def _ensure(self, depth: int) -> None:
        if not hasattr(self, "depth_"):
            self._reset(self.depth if self.depth is not None else depth)

    def add(self, volumes) -> None:
        """Fold in one profile. ``None`` counts as an all-zero (empty side) snapshot.

        Profiles shorter than ``depth`` are zero-extended.
        """
        if volumes is None:
            if not hasattr(self, "depth_"):
                if self.depth is None:
                    raise ValueError("depth must be set before adding empty snapshots")
                self._reset(self.depth)
            self.n_samples_seen_ += 1
            return
        self._ensure(len(volumes))
        n = len(volumes)
        if n == self.depth_:
            np.add(self._csum, volumes, out=self._csum)
            np.multiply(volumes, volumes, out=self._tmp)
            np.add(self._csq, self._tmp, out=self._csq)
        elif n < self.depth_:
            np.add(self._csum[:n], volumes, out=self._csum[:n])
            np.multiply(volumes, volumes, out=self._tmp[:n])
            np.add(self._csq[:n], self._tmp[:n], out=self._csq[:n])
        else:
            raise ValueError(f"profile of length {n} exceeds depth {self.depth_}")
        self.n_samples_seen_ += 1
        self._pending += 1
        if self._pending >= _CHUNK:
            self._flush()

    def partial_fit(self, X, y=None):
        """Fold in a batch of profiles, shape ``(n_snapshots, depth)``."""
        if isinstance(X, ShapeSnapshot):
            X = [X]
        if len(X) and isinstance(X[0], ShapeSnapshot):
            X = np.vstack([s.volumes for s in X])
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.size and (X.min() < 0 or not np.issubdtype(X.dtype, np.integer)):
            raise ValueError("profiles must be non-negative integers")
        self._ensure(X.shape[1])
        if X.shape[1] != self.depth_:
            raise ValueError(f"expected depth {self.depth_}, got {X.shape[1]}")
        self._flush()
        for row in X:
            r = [int(v) for v in row]
            self._sum += np.array(r, dtype=object)
            self._sq += np.array([v * v for v in r], dtype=object)
        self.n_samples_seen_ += X.shape[0]
        return self

    def fit(self, X, y=None):
        for attr in ("depth_", "n_samples_seen_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X)

    def merge(self, other: "ShapeAverager") -> "ShapeAverager":
        check_is_fitted(other, "n_samples_seen_")
        self._ensure(other.depth_)
        if other.depth_ != self.depth_:
            raise ValueError("cannot merge averagers of different depth")
        self._flush()
        other._flush()
        self._sum = self._sum + other._sum
        self._sq = self._sq + other._sq
        self.n_samples_seen_ += other.n_samples_seen_
        return self

    @property
    def sums_(self) -> tuple[list[int], list[int]]:
        """Exact ``(sum V, sum V^2)`` per depth."""
        check_is_fitted(self, "n_samples_seen_")
        self._flush()
        return [int(v) for v in self._sum], [int(v) for v in self._sq]

    def result(self, side=None) -> AveragedShape:
        check_is_fitted(self, "n_samples_seen_")
        M = self.n_samples_seen_
        if M == 0:
            raise NotFittedError("no snapshots were averaged")
        s, q = self.sums_
        V = np.array([si / M for si in s])
        # population variance (M q - s^2) / M^2, numerator exact
        sigma = np.array([math.sqrt(M * qi - si * si) / M for si, qi in zip(s, q)])
        return AveragedShape(V, sigma, M, Side.coerce(side) if side is not None else None)

    @property
    def mean_(self) -> np.ndarray:
        return self.result().V

    @property
    def std_(self) -> np.ndarray:
        return self.result().sigma


def average_shape(snapshots: Iterable, depth: Optional[int] = None) -> AveragedShape:
    """Average a stream of :class:`ShapeSnapshot` (or raw profiles) over event time."""
    avg = ShapeAverager(depth)
    side = None
    for snap in snapshots:
        if isinstance(snap, ShapeSnapshot):
            if side is None:
                side = snap.side
            elif snap.side is not side:
                raise ValueError("snapshots mix buy and sell sides")
            if avg.depth is None and not hasattr(avg, "depth_"):
                avg.depth = snap.depth
            avg.add(None if snap.empty else snap.volumes)
        else:
            avg.add(np.asarray(snap, dtype=np.int64))
    if not hasattr(avg, "n_samples_seen_") or avg.n_samples_seen_ == 0:
        raise ValueError("cannot average an empty snapshot stream")
    return avg.result(side)


def _profile(shape) -> np.ndarray:
    if isinstance(shape, AveragedShape):
        return np.asarray(shape.V, dtype=float)
    return check_series(shape, name="shape")


def locate_maximum(shape) -> int:
    """Smallest depth attaining the maximum mean volume."""
    V = _profile(shape)
    if V.size == 0:
        raise ValueError("empty shape")
    return int(np.argmax(V)) + 1


def default_tail_range(shape, delta=None) -> tuple[int, int]:
    """From the shape maximum to 90% of the last occupied depth.

    The upper cut keeps clear of the price-limit plummet at the band edge.
    """
    V = _profile(shape)
    delta = np.arange(1, V.size + 1) if delta is None else np.asarray(delta)
    occupied = np.flatnonzero(V > 0)
    if occupied.size == 0:
        raise ValueError("shape has no positive volume")
    lo = int(delta[int(np.argmax(V))])
    hi = int(math.floor(0.9 * delta[occupied[-1]]))
    if hi - lo + 1 < 3:
        raise ValueError(f"default tail range [{lo}, {hi}] is too short; pass fit_range")
    return lo, hi


class ExponentialTailFit(BaseEstimator):
    """Least-squares fit of ``V(delta) = C exp(-beta delta)`` on log volumes.

    Parameters
    ----------
    fit_range : (int, int), optional
        Inclusive depth window. Defaults to :func:`default_tail_range`.

    Attributes
    ----------
    beta_, beta_stderr_ : float
        Decay rate per tick and its OLS standard error.
    intercept_ : float
        ``ln C``.
    r_squared_ : float
    fit_range_ : tuple of int
    """

    def __init__(self, fit_range=None):
        self.fit_range = fit_range

    def fit(self, X, y=None):
        if y is None:
            V = _profile(X)
            delta = np.arange(1, V.size + 1, dtype=float)
        else:
            delta = check_series(X, name="delta")
            V = check_series(y, name="volume")
            if delta.shape != V.shape:
                raise ValueError("delta and volume lengths differ")
        if self.fit_range is None:
            lo, hi = default_tail_range(V, delta)
        else:
            lo, hi = (int(v) for v in self.fit_range)
        mask = (delta >= lo) & (delta <= hi)
        if mask.sum() < 3:
            raise ValueError(f"fit range [{lo}, {hi}] holds fewer than 3 levels")
        if np.any(V[mask] <= 0):
            raise ValueError("non-positive volume inside the fit range")
        line = ols_line(delta[mask], np.log(V[mask]))
        self.beta_ = -line.slope
        self.beta_stderr_ = line.slope_stderr
        self.intercept_ = line.intercept
        self.r_squared_ = line.r_squared
        self.fit_range_ = (lo, hi)
        self.n_levels_ = int(mask.sum())
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "beta_")
        delta = check_series(X, name="delta")
        return np.exp(self.intercept_ - self.beta_ * delta)

    def report(self) -> dict:
        check_is_fitted(self, "beta_")
        return {
            "beta": self.beta_,
            "stderr": self.beta_stderr_,
            "range": list(self.fit_range_),
            "r2": self.r_squared_,
        }


def fit_exponential_tail(shape, fit_range=None) -> ExponentialTailFit:
    return ExponentialTailFit(fit_range=fit_range).fit(shape)


class PeriodicPeakDetector(BaseEstimator):
    """Flags excess volume at depths ``period * n + 1``.

    Each candidate depth (n >= 1, both neighbours inside the profile) is
    scored by its volume over the mean of its two neighbours. The shape has
    peaks when the geometric mean of those ratios exceeds ``threshold``.
    Candidates with a zero score or zero neighbours are skipped.
    """

    def __init__(self, period: int = 5, threshold: float = 1.1):
        self.period = period
        self.threshold = threshold

    def fit(self, X, y=None):
        V = _profile(X)
        p = int(self.period)
        if p < 2:
            raise ValueError("period must be at least 2")
        if V.size < 2 * p + 1:
            raise ValueError(f"profile depth {V.size} < {2 * p + 1}")
        positions, ratios, skipped = [], [], []
        for d in range(p + 1, V.size, p):  # d+1 <= depth keeps the right neighbour in range
            peak = V[d - 1]
            neighbours = 0.5 * (V[d - 2] + V[d])
            if peak <= 0 or neighbours <= 0:
                skipped.append(d)
                continue
            positions.append(d)
            ratios.append(peak / neighbours)
        self.peak_positions_ = np.array(positions, dtype=int)
        self.ratios_ = np.array(ratios)
        self.skipped_ = skipped
        self.mean_ratio_ = float(np.exp(np.mean(np.log(self.ratios_)))) if ratios else float("nan")
        self.has_peaks_ = bool(ratios) and self.mean_ratio_ > self.threshold
        return self

    def report(self) -> dict:
        check_is_fitted(self, "ratios_")
        return {
            "period": int(self.period),
            "threshold": float(self.threshold),
            "positions": [int(d) for d in self.peak_positions_],
            "ratios": [float(r) for r in self.ratios_],
            "mean_ratio": self.mean_ratio_,
            "has_peaks": self.has_peaks_,
        }


def detect_periodic_peaks(shape, period: int = 5, threshold: float = 1.1) -> PeriodicPeakDetector:
    return PeriodicPeakDetector(period=period, threshold=threshold).fit(shape)
