"""Seeded synthetic data: order flow, planted book shapes and fractional Gaussian noise.

Every generator takes an explicit seed and is a pure function of its
parameters, so identical parameters give identical output bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import stats

from .book import LimitOrderBook, Side
from .orderflow import (
    HEADER,
    Kind,
    OrderEvent,
    RejectReason,
    SessionConfig,
    format_event_record,
    format_wall_time,
)
from .shape import AveragedShape
from .volstats import IntervalAverager

__all__ = [
    "FgnParams",
    "FlowParams",
    "GeneratorLedger",
    "OrderFlowGenerator",
    "fgn_autocovariance",
    "generate_fgn",
    "generate_order_flow",
    "write_order_flow",
    "generate_planted_shape",
    "sample_powerlaw_lognormal",
]


# -- fractional Gaussian noise ---------------------------------------------

def fgn_autocovariance(hurst: float, k) -> np.ndarray:
    """Unit-variance fGn autocovariance ``(|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2``."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


@dataclass(frozen=True)
class FgnParams:
    hurst: float
    n: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (0, 1)")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two >= 2")


def generate_fgn(hurst: float, n: int, seed: int = 0) -> np.ndarray:
    """Exact unit-variance fGn by circulant embedding (Davies-Harte).

    The autocovariance is embedded in a circulant of size 2n whose
    eigenvalues come from one FFT. For a complex standard normal vector Z,
    ``FFT(sqrt(lambda / 2n) Z)`` has real and imaginary parts that are
    independent draws with exactly the target covariance; the real part is
    returned.
    """
    params = FgnParams(hurst, n, seed)
    n = params.n
    m = 2 * n
    gamma = fgn_autocovariance(params.hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise ValueError(
            f"circulant embedding is not non-negative definite for H={hurst}, n={n}; use a larger n"
        )
    lam = np.clip(lam, 0.0, None)
    rng = np.random.default_rng(params.seed)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    y = np.fft.fft(np.sqrt(lam / m) * z)
    return y.real[:n].copy()


# -- planted shapes ----------------------------------------------------------

def generate_planted_shape(kind: str, **params) -> AveragedShape:
    """Noiseless (or lognormally perturbed) shape fixtures.

    kind
        ``"exponential"``: ``C exp(-beta delta)``.
        ``"mode"``: ``C (d/m)^k exp(-k (d/m - 1))`` with its maximum at ``delta_max``.
        ``"periodic"``: exponential with depths ``period*n + 1`` multiplied by ``boost``.
        ``"truncated"``: exponential that drops to zero beyond ``cutoff``.

    Common keyword arguments: ``depth`` (200), ``scale`` C (1e4), ``beta``
    (0.044), ``noise`` (std of a multiplicative lognormal factor, 0) and
    ``seed``.
    """
    depth = int(params.pop("depth", 200))
    scale = float(params.pop("scale", 1e4))
    beta = float(params.pop("beta", 0.044))
    noise = float(params.pop("noise", 0.0))
    seed = params.pop("seed", 0)
    d = np.arange(1, depth + 1, dtype=float)
    if kind == "exponential":
        V = scale * np.exp(-beta * d)
    elif kind == "mode":
        m = float(params.pop("delta_max"))
        k = float(params.pop("k", 2.0))
        V = scale * (d / m) ** k * np.exp(-k * (d / m - 1.0))
    elif kind == "periodic":
        boost = float(params.pop("boost", 1.3))
        period = int(params.pop("period", 5))
        V = scale * np.exp(-beta * d)
        V[(d.astype(int) - 1) % period == 0] *= boost
    elif kind == "truncated":
        cutoff = int(params.pop("cutoff"))
        V = scale * np.exp(-beta * d)
        V[cutoff:] = 0.0
    else:
        raise ValueError(f"unknown planted shape kind {kind!r}")
    if params:
        raise TypeError(f"unexpected parameters for {kind!r}: {sorted(params)}")
    if noise > 0:
        V = V * np.exp(noise * np.random.default_rng(seed).standard_normal(depth))
    return AveragedShape(V, np.zeros(depth), M=1)


# -- volume distributions ----------------------------------------------------

def sample_powerlaw_lognormal(
    n: int, beta: float, crossover: float, mu: float, sigma: float, seed: int = 0
) -> np.ndarray:
    """Positive samples whose log density has a power-law left tail.

    With ``x = ln v``: below ``x_c = crossover * ln 10`` the density of x is
    proportional to ``exp(beta x)`` (so ``f(ln v) ~ v**beta``); above it is
    the Normal(mu, sigma) density, joined continuously at ``x_c``.
    """
    if beta <= 0 or sigma <= 0:
        raise ValueError("beta and sigma must be positive")
    xc = crossover * math.log(10.0)
    left_mass = stats.norm.pdf(xc, mu, sigma) / beta
    right_mass = stats.norm.sf(xc, mu, sigma)
    rng = np.random.default_rng(seed)
    n_left = rng.binomial(n, left_mass / (left_mass + right_mass))
    left = xc + np.log(rng.random(n_left)) / beta
    need = n - n_left
    accept = max(right_mass, 1e-3)
    parts, have = [], 0
    while have < need:
        draw = rng.normal(mu, sigma, int((need - have) / accept * 1.05) + 16)
        draw = draw[draw >= xc]
        parts.append(draw)
        have += draw.size
    right = np.concatenate(parts)[:need] if parts else np.empty(0)
    x = np.concatenate([left, right])
    rng.shuffle(x)
    return np.exp(x)


# -- order flow ----------------------------------------------------------------

@dataclass(frozen=True)
class FlowParams:
    """Parameters of the synthetic order-flow model.

    Limit orders are placed at depth ``delta`` behind the same-side best,
    drawn from the placement law (``"exponential"`` with rate
    ``placement_rate``, or ``"uniform"`` on ``1..placement_depth``) and
    truncated at the price band. A fraction of limit orders instead improves
    the spread or crosses it, so the book trades. Cancels hit a uniformly
    chosen resting order. Sizes are rounded lognormal draws.

    With ``resting_target`` unset the kind of each event follows ``mix``
    exactly. When set, the cancel weight is scaled by (live orders /
    ``resting_target``), i.e. every resting order carries the same cancel
    hazard, and the book settles at a bounded size instead of growing with
    the stream.
    """

    n_events: int = 10_000
    mix: tuple = (0.4, 0.4, 0.2)  # buy, sell, cancel
    placement: str = "exponential"
    placement_rate: float = 0.044
    placement_depth: Optional[int] = None
    size_mu: float = 6.0
    size_sigma: float = 1.0
    marketable_fraction: float = 0.05
    inside_fraction: float = 0.05
    invalid_fraction: float = 0.0
    resting_target: Optional[int] = None
    seed: int = 0
    dt: float = 60.0
    config: SessionConfig = field(default_factory=SessionConfig)

    def __post_init__(self):
        object.__setattr__(self, "mix", tuple(float(m) for m in self.mix))
        if len(self.mix) != 3 or any(m < 0 for m in self.mix) or abs(sum(self.mix) - 1) > 1e-9:
            raise ValueError("mix must be three non-negative proportions summing to 1")
        if self.placement not in ("exponential", "uniform"):
            raise ValueError(f"unknown placement law {self.placement!r}")
        if self.placement_rate <= 0 or self.size_sigma < 0 or self.dt <= 0:
            raise ValueError("rates must be positive")
        if self.resting_target is not None and self.resting_target < 1:
            raise ValueError("resting_target must be positive")
        if self.n_events < 0:
            raise ValueError("n_events must be non-negative")
        for frac in (self.marketable_fraction, self.inside_fraction, self.invalid_fraction):
            if not 0 <= frac < 1:
                raise ValueError("fractions must lie in [0, 1)")
        if self.marketable_fraction + self.inside_fraction >= 1:
            raise ValueError("marketable_fraction + inside_fraction must be < 1")
        bw = self.config.band_width
        if bw < 3:
            raise ValueError(f"price band of {bw} ticks is too narrow to place orders")
        if self.placement_depth is not None and not 1 <= self.placement_depth <= bw:
            raise ValueError(f"placement_depth must lie in [1, {bw}] (band width)")

    def to_dict(self) -> dict:
        d = asdict(self)
        cfg = self.config
        d["config"] = {
            "tick_size": str(cfg.tick_size),
            "prev_close": cfg.prev_close,
            "limit_fraction": str(cfg.limit_fraction),
            "session_windows": [[format_wall_time(a), format_wall_time(b)] for a, b in cfg.session_windows],
        }
        d["mix"] = list(self.mix)
        return d


@dataclass
class GeneratorLedger:
    """What the generator emitted, for reconciliation against stream reports."""

    seed: int
    records: int = 0
    counts: dict = field(default_factory=lambda: {k.value: 0 for k in Kind})
    invalid: dict = field(default_factory=lambda: {r.value: 0 for r in RejectReason})
    interval_counts: dict = field(default_factory=dict)
    placement_volume: dict = field(default_factory=lambda: {"buy": {}, "sell": {}})
    traded_volume: int = 0

    @property
    def invalid_count(self) -> int:
        return sum(self.invalid.values())

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "records": self.records,
            "counts": dict(self.counts),
            "invalid": dict(self.invalid),
            "invalid_count": self.invalid_count,
            "interval_counts": {str(k): v for k, v in sorted(self.interval_counts.items())},
            "placement_volume": {
                side: {str(k): v for k, v in sorted(levels.items())}
                for side, levels in self.placement_volume.items()
            },
            "traded_volume": self.traded_volume,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_CHUNK = 8192


class OrderFlowGenerator:
    """Iterates a valid order-flow stream; the ledger is complete once exhausted.

    The generator drives its own :class:`LimitOrderBook` so that cancels
    target live orders and placements track the moving best quotes.
    """

    def __init__(self, params: FlowParams):
        self.params = params
        self.config = params.config
        self.book = LimitOrderBook(self.config)
        self.ledger = GeneratorLedger(params.seed)
        self._intervals = IntervalAverager(params.dt, self.config)

    def _clock(self, rng) -> Iterator[int]:
        """Wall times from exponential gaps, packed into the session windows."""
        windows = list(self.config.session_windows) or [(0, 24 * 360000 - 1)]
        total = sum(b - a for a, b in windows)
        mean_gap = total / max(self.params.n_events, 1)
        tau = 0.0
        while True:
            gaps = rng.exponential(mean_gap, _CHUNK)
            for g in gaps:
                tau = min(tau + g, float(total))
                rest = int(tau)
                for a, b in windows:
                    if rest <= b - a:
                        yield a + rest
                        break
                    rest -= b - a
                else:  # pragma: no cover
                    yield windows[-1][1]

    def __iter__(self) -> Iterator[OrderEvent]:
        p = self.params
        book = self.book
        lo, hi = book.lo, book.hi
        led = self.ledger
        rng = np.random.default_rng(p.seed)
        clock = self._clock(np.random.default_rng([p.seed, 7]))
        p_buy, p_sell = p.mix[0], p.mix[0] + p.mix[1]
        live: list[int] = []
        pos: dict[int, int] = {}
        next_ref = 1
        last_trade = self.config.prev_close
        beta = p.placement_rate
        depth_cap = p.placement_depth or book.band_width

        def drop(ref):
            i = pos.pop(ref)
            last = live.pop()
            if last != ref:
                live[i] = last
                pos[last] = i

        produced = 0
        while produced < p.n_events:
            m = min(_CHUNK, p.n_events - produced)
            u_kind = rng.random(m)
            u_mode = rng.random(m)
            u_depth = rng.random(m)
            u_pick = rng.random(m)
            z_size = rng.standard_normal(m)
            k_cross = rng.geometric(0.5, m) - 1
            for i in range(m):
                produced += 1
                wall = next(clock)
                uk = u_kind[i]
                if p.resting_target:
                    wc = p.mix[2] * len(live) / p.resting_target
                    uk = uk * (p_sell + wc)
                if uk >= p_sell and live:
                    ref = live[int(u_pick[i] * len(live))]
                    event = OrderEvent(produced, wall, Kind.CANCEL, ref)
                    book.apply(event)
                    drop(ref)
                else:
                    if uk >= p_sell:  # cancel requested on an empty book
                        buy = u_pick[i] < 0.5
                    else:
                        buy = uk < p_buy
                    side = Side.BUY if buy else Side.SELL
                    bb, ba = book.best_bid, book.best_ask
                    own, opp = (bb, ba) if buy else (ba, bb)
                    r = u_mode[i]
                    placed_delta = None
                    if r < p.marketable_fraction and opp is not None:
                        price = opp + k_cross[i] if buy else opp - k_cross[i]
                    elif (
                        r < p.marketable_fraction + p.inside_fraction
                        and bb is not None and ba is not None and ba - bb > 1
                    ):
                        price = bb + 1 + int(u_depth[i] * (ba - bb - 1))
                    else:
                        if own is not None:
                            anchor = own
                        elif opp is not None:
                            anchor = opp - 1 if buy else opp + 1
                        else:
                            anchor = last_trade
                        anchor = min(max(anchor, lo), hi)
                        kmax = min(depth_cap, anchor - lo + 1 if buy else hi - anchor + 1)
                        if p.placement == "exponential":
                            tail = -math.expm1(-beta * kmax)
                            delta = 1 + int(-math.log1p(-u_depth[i] * tail) / beta)
                            delta = min(delta, kmax)
                        else:
                            delta = 1 + int(u_depth[i] * kmax)
                        price = anchor - (delta - 1) if buy else anchor + (delta - 1)
                        placed_delta = delta
                    price = int(min(max(price, lo), hi))
                    size = max(1, int(round(math.exp(p.size_mu + p.size_sigma * z_size[i]))))
                    ref = next_ref
                    next_ref += 1
                    event = OrderEvent(produced, wall, Kind.BUY if buy else Kind.SELL, ref, size, price)
                    delta_ = book.apply(event)
                    for tr in delta_.trades:
                        if tr.maker_ref in pos and tr.maker_ref not in book.order_index:
                            drop(tr.maker_ref)
                        led.traded_volume += tr.size
                        last_trade = tr.price
                    if delta_.added:
                        pos[ref] = len(live)
                        live.append(ref)
                    if placed_delta is not None:
                        levels = led.placement_volume[side.value]
                        levels[placed_delta] = levels.get(placed_delta, 0) + size
                led.counts[event.kind.value] += 1
                k = self._intervals.interval_of(wall)
                led.interval_counts[k] = led.interval_counts.get(k, 0) + 1
                yield event

    def lines(self) -> Iterator[str]:
        """Wire-format records with the header, including injected invalid records."""
        p = self.params
        cfg = self.config
        led = self.ledger
        inj = np.random.default_rng([p.seed, 11])
        reasons = (RejectReason.MALFORMED, RejectReason.OFF_GRID, RejectReason.OUT_OF_BAND)
        lo, hi = cfg.band
        yield HEADER
        record = 0
        for event in self:
            if p.invalid_fraction and inj.random() < p.invalid_fraction:
                reason = reasons[int(inj.integers(len(reasons)))]
                record += 1
                t = format_wall_time(event.wall_time)
                ref = 10**12 + record
                if reason is RejectReason.MALFORMED:
                    line = f"{record},{t},B,{ref},0,{cfg.ticks_to_price(lo)}"
                elif reason is RejectReason.OFF_GRID:
                    line = f"{record},{t},S,{ref},100,{cfg.ticks_to_price(lo)}5"
                else:
                    line = f"{record},{t},B,{ref},100,{cfg.ticks_to_price(hi + 1)}"
                led.invalid[reason.value] += 1
                led.records += 1
                yield line
            record += 1
            led.records += 1
            yield format_event_record(
                OrderEvent(record, event.wall_time, event.kind, event.order_ref, event.size, event.price),
                cfg,
            )


def generate_order_flow(params: FlowParams) -> tuple[list[OrderEvent], GeneratorLedger]:
    gen = OrderFlowGenerator(params)
    events = list(gen)
    gen.ledger.records = len(events)
    return events, gen.ledger


def write_order_flow(params: FlowParams, path) -> GeneratorLedger:
    """Stream the wire-format CSV to ``path`` and return the ledger."""
    gen = OrderFlowGenerator(params)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in gen.lines():
            fh.write(line)
            fh.write("\n")
    return gen.ledger
