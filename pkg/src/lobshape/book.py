"""Limit-order book under price-time priority.

The book keeps two representations per side: FIFO queues per price level
(the matching state) and a dense integer volume ladder indexed by absolute
price across the daily price band.  The ladder makes depth snapshots a
zero-copy slice, which is what per-event shape aggregation needs.
"""
from __future__ import annotations

import bisect
import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .orderflow import Kind, OrderEvent, SessionConfig

__all__ = [
    "Side",
    "Trade",
    "BookDelta",
    "PriceLevel",
    "ShapeSnapshot",
    "Impact",
    "LimitOrderBook",
    "BookError",
    "CancelUnknown",
    "DuplicateOrder",
    "PriceOutOfBand",
    "NoLiquidity",
    "InvariantViolation",
    "apply_event",
    "best_bid",
    "best_ask",
    "snapshot_shape",
    "virtual_price_impact",
]


class Side(str, enum.Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY

    @classmethod
    def coerce(cls, value) -> "Side":
        if isinstance(value, cls):
            return value
        value = str(value).lower()
        if value in ("b", "bid"):
            return cls.BUY
        if value in ("s", "ask", "a"):
            return cls.SELL
        return cls(value)


class BookError(Exception):
    """Base class for data errors raised while applying events."""


class CancelUnknown(BookError, KeyError):
    pass


class DuplicateOrder(BookError, ValueError):
    pass


class PriceOutOfBand(BookError, ValueError):
    pass


class NoLiquidity(BookError, ValueError):
    pass


class InvariantViolation(AssertionError):
    """Engine bug: the book broke one of its own invariants."""


class Trade(NamedTuple):
    price: int
    size: int
    maker_ref: int


@dataclass(slots=True)
class BookDelta:
    """Volume accounting for one applied event.

    ``added`` is the volume that came to rest, ``traded`` the volume removed
    from resting orders by executions, so ``added - traded - cancelled`` is
    exactly the change in total resting volume.
    """

    t: int
    trades: list = field(default_factory=list)
    added: int = 0
    cancelled: int = 0

    @property
    def traded(self) -> int:
        return sum(tr.size for tr in self.trades)


class PriceLevel:
    __slots__ = ("price", "orders", "volume")

    def __init__(self, price: int):
        self.price = price
        self.orders: OrderedDict[int, int] = OrderedDict()  # ref -> remaining, arrival order
        self.volume = 0

    def __repr__(self):
        return f"PriceLevel(price={self.price}, volume={self.volume}, n={len(self.orders)})"


@dataclass(frozen=True)
class ShapeSnapshot:
    """Instantaneous volume profile; ``volumes[k]`` is the volume at depth k+1."""

    t: int
    wall_time: Optional[int]
    side: Side
    volumes: np.ndarray
    empty: bool = False

    @property
    def depth(self) -> int:
        return len(self.volumes)


class Impact(NamedTuple):
    ticks: int
    saturated: bool


_BUY, _SELL = 0, 1


class LimitOrderBook:
    """Two-sided book of FIFO queues.

    Parameters
    ----------
    config : SessionConfig, optional
        Supplies the tick grid and price band. Defaults to ``SessionConfig()``.
    """

    def __init__(self, config: Optional[SessionConfig] = None):
        self.config = config if config is not None else SessionConfig()
        self.lo, self.hi = self.config.band
        self.band_width = self.hi - self.lo + 1
        # padding lets any depth up to band_width be sliced without bounds checks
        self._pad = self.band_width
        n = self.band_width + 2 * self._pad
        self._ladder = (np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))
        self._levels: tuple[dict[int, PriceLevel], dict[int, PriceLevel]] = ({}, {})
        # sorted so that the best price sits at the end: bids ascending, asks as negated prices
        self._keys: tuple[list[int], list[int]] = ([], [])
        self.order_index: dict[int, tuple[Side, int]] = {}
        self.total_volume = [0, 0]
        self.t = 0
        self.wall_time: Optional[int] = None

    # -- queries ----------------------------------------------------------

    @property
    def best_bid(self) -> Optional[int]:
        keys = self._keys[_BUY]
        return keys[-1] if keys else None

    @property
    def best_ask(self) -> Optional[int]:
        keys = self._keys[_SELL]
        return -keys[-1] if keys else None

    def best(self, side) -> Optional[int]:
        return self.best_bid if Side.coerce(side) is Side.BUY else self.best_ask

    def levels(self, side) -> list[PriceLevel]:
        """Levels of one side, best first."""
        s = _BUY if Side.coerce(side) is Side.BUY else _SELL
        keys = self._keys[s]
        book = self._levels[s]
        if s == _BUY:
            return [book[k] for k in reversed(keys)]
        return [book[-k] for k in reversed(keys)]

    def volume_at(self, side, price: int) -> int:
        s = _BUY if Side.coerce(side) is Side.BUY else _SELL
        level = self._levels[s].get(price)
        return level.volume if level is not None else 0

    def queue_position(self, order_ref: int) -> int:
        side, price = self.order_index[order_ref]
        level = self._levels[_BUY if side is Side.BUY else _SELL][price]
        for pos, ref in enumerate(level.orders):
            if ref == order_ref:
                return pos
        raise InvariantViolation(f"order {order_ref} indexed but not queued")

    def resting_orders(self) -> list[tuple[str, int, int, int]]:
        """``(side, price, order_ref, remaining)`` in priority order per side."""
        out = []
        for side in (Side.BUY, Side.SELL):
            for level in self.levels(side):
                out.extend((side.value, level.price, ref, rem) for ref, rem in level.orders.items())
        return out

    def depth_view(self, side, depth: int) -> np.ndarray:
        """Volumes at depths 1..``depth`` from the same-side best (read-only view).

        Returns ``None`` when the side is empty.
        """
        s = _BUY if Side.coerce(side) is Side.BUY else _SELL
        keys = self._keys[s]
        if not keys:
            return None
        if depth > self._pad:
            raise ValueError(f"depth {depth} exceeds the band width {self._pad}")
        ladder = self._ladder[s]
        if s == _BUY:
            i = keys[-1] - self.lo + self._pad
            return ladder[i - depth + 1 : i + 1][::-1]
        i = -keys[-1] - self.lo + self._pad
        return ladder[i : i + depth]

    def snapshot(self, side, depth: Optional[int] = None) -> ShapeSnapshot:
        side = Side.coerce(side)
        depth = self.band_width if depth is None else int(depth)
        if depth < 1:
            raise ValueError("depth must be >= 1")
        view = self.depth_view(side, min(depth, self._pad))
        volumes = np.zeros(depth, dtype=np.int64)
        if view is not None:
            volumes[: len(view)] = view
        return ShapeSnapshot(self.t, self.wall_time, side, volumes, empty=view is None)

    def impact(self, side, omega: int) -> Impact:
        """Virtual price impact of a market order of ``omega`` shares on ``side``.

        The order walks the opposite book. Result is the largest depth n whose
        cumulative volume does not exceed ``omega``; when ``omega`` covers the
        whole opposite book the deepest occupied depth is returned with
        ``saturated=True``.
        """
        if omega < 0:
            raise ValueError("omega must be non-negative")
        walked = Side.coerce(side).opposite
        view = self.depth_view(walked, self._pad)
        if view is None:
            raise NoLiquidity(f"no resting {walked.value} orders")
        total = self.total_volume[_BUY if walked is Side.BUY else _SELL]
        if omega >= total:
            keys = self._keys[_BUY if walked is Side.BUY else _SELL]
            return Impact(abs(abs(keys[0]) - abs(keys[-1])) + 1, True)
        cum = np.cumsum(view)
        return Impact(int(np.searchsorted(cum, omega, side="right")), False)

    # -- mutation ---------------------------------------------------------

    def apply(self, event: OrderEvent) -> BookDelta:
        self.t += 1
        self.wall_time = event.wall_time
        delta = BookDelta(self.t)
        kind = event.kind
        if kind is Kind.CANCEL:
            self._cancel(event.order_ref, delta)
        elif kind is Kind.BUY:
            self._limit(_BUY, event, delta)
        elif kind is Kind.SELL:
            self._limit(_SELL, event, delta)
        else:  # pragma: no cover
            raise ValueError(f"unknown event kind {kind!r}")
        bids, asks = self._keys
        if bids and asks and bids[-1] >= -asks[-1]:
            raise InvariantViolation(f"crossed book at t={self.t}: {bids[-1]} >= {-asks[-1]}")
        return delta

    def replay(self, events: Iterable[OrderEvent]) -> Iterator[BookDelta]:
        for event in events:
            yield self.apply(event)

    def _limit(self, s: int, event: OrderEvent, delta: BookDelta) -> None:
        price, qty, ref = event.price, event.size, event.order_ref
        if ref in self.order_index:
            raise DuplicateOrder(f"order_ref {ref} is already resting")
        if not self.lo <= price <= self.hi:
            raise PriceOutOfBand(f"price {price} outside [{self.lo}, {self.hi}]")
        if qty <= 0:
            raise ValueError(f"non-positive size {qty}")

        o = 1 - s
        okeys = self._keys[o]
        olevels = self._levels[o]
        oladder = self._ladder[o]
        trades = delta.trades
        index = self.order_index
        while qty and okeys:
            best = okeys[-1] if o == _BUY else -okeys[-1]
            if (s == _BUY and best > price) or (s == _SELL and best < price):
                break
            level = olevels[best]
            orders = level.orders
            while qty and orders:
                mref, rem = next(iter(orders.items()))
                fill = rem if rem < qty else qty
                trades.append(Trade(best, fill, mref))
                qty -= fill
                level.volume -= fill
                if fill == rem:
                    orders.popitem(last=False)
                    del index[mref]
                else:
                    orders[mref] = rem - fill
                self.total_volume[o] -= fill
            oladder[best - self.lo + self._pad] = level.volume
            if not orders:
                del olevels[best]
                okeys.pop()

        if qty:
            levels = self._levels[s]
            level = levels.get(price)
            if level is None:
                level = levels[price] = PriceLevel(price)
                bisect.insort(self._keys[s], price if s == _BUY else -price)
            level.orders[ref] = qty
            level.volume += qty
            self._ladder[s][price - self.lo + self._pad] = level.volume
            self.total_volume[s] += qty
            index[ref] = (Side.BUY if s == _BUY else Side.SELL, price)
            delta.added = qty

    def _cancel(self, ref: int, delta: BookDelta) -> None:
        try:
            side, price = self.order_index.pop(ref)
        except KeyError:
            raise CancelUnknown(f"cancel of unknown order_ref {ref}") from None
        s = _BUY if side is Side.BUY else _SELL
        level = self._levels[s][price]
        rem = level.orders.pop(ref)
        level.volume -= rem
        self.total_volume[s] -= rem
        self._ladder[s][price - self.lo + self._pad] = level.volume
        if not level.orders:
            del self._levels[s][price]
            keys = self._keys[s]
            key = price if s == _BUY else -price
            i = bisect.bisect_left(keys, key)
            del keys[i]
        delta.cancelled = rem

    # -- diagnostics ------------------------------------------------------

    def check_invariants(self) -> None:
        """Full O(book) consistency check; raises InvariantViolation."""
        seen = set()
        for s, side in ((_BUY, Side.BUY), (_SELL, Side.SELL)):
            levels = self._levels[s]
            keys = self._keys[s]
            if sorted(keys) != keys or len(keys) != len(levels):
                raise InvariantViolation(f"{side.value} key list out of sync")
            total = 0
            for price, level in levels.items():
                if not self.lo <= price <= self.hi:
                    raise InvariantViolation(f"resting price {price} outside band")
                if not level.orders or level.volume <= 0:
                    raise InvariantViolation(f"empty level {price} retained")
                if sum(level.orders.values()) != level.volume:
                    raise InvariantViolation(f"level {price} volume mismatch")
                if self._ladder[s][price - self.lo + self._pad] != level.volume:
                    raise InvariantViolation(f"ladder mismatch at {price}")
                for ref, rem in level.orders.items():
                    if rem <= 0:
                        raise InvariantViolation(f"order {ref} has size {rem}")
                    if self.order_index.get(ref) != (side, price):
                        raise InvariantViolation(f"order {ref} missing from index")
                    seen.add(ref)
                total += level.volume
            expected_keys = sorted(p if s == _BUY else -p for p in levels)
            if expected_keys != keys:
                raise InvariantViolation(f"{side.value} keys do not match levels")
            if total != self.total_volume[s] or int(self._ladder[s].sum()) != total:
                raise InvariantViolation(f"{side.value} total volume mismatch")
        if seen != set(self.order_index):
            raise InvariantViolation("order index is not a bijection over resting orders")
        bb, ba = self.best_bid, self.best_ask
        if bb is not None and ba is not None and bb >= ba:
            raise InvariantViolation("crossed book")


def apply_event(book: LimitOrderBook, event: OrderEvent) -> BookDelta:
    return book.apply(event)


def best_bid(book: LimitOrderBook) -> Optional[int]:
    return book.best_bid


def best_ask(book: LimitOrderBook) -> Optional[int]:
    return book.best_ask


def snapshot_shape(book: LimitOrderBook, side, depth: Optional[int] = None) -> ShapeSnapshot:
    return book.snapshot(side, depth)


def virtual_price_impact(book: LimitOrderBook, side, omega: int) -> Impact:
    return book.impact(side, omega)
