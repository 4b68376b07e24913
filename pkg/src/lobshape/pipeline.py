"""Streaming replay: events -> book -> per-event shape aggregation and logs.

Memory stays proportional to the book (resting orders and price band), not
to the stream: events are consumed lazily and every snapshot is folded into
running sums the moment it is taken.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

import numpy as np

from .book import LimitOrderBook, Side
from .orderflow import OrderEvent, SessionConfig
from .shape import ShapeAverager
from .volstats import IntervalAverager

__all__ = ["Reconstruction", "reconstruct"]


@dataclass
class Reconstruction:
    """Replays a stream and aggregates both sides after every event.

    Parameters
    ----------
    config : SessionConfig
    depth : int, optional
        Snapshot depth D; defaults to the band width.
    volume_levels : iterable of (side, delta)
        Depths for which clock-interval averages of V(delta, t) are kept.
    dt : float
        Interval length in seconds for ``volume_levels``.
    snapshot_out, trades_out : text file, optional
        Receive the sparse ``t,side,delta,volume`` dump and the
        ``t,trade_price,trade_size`` log.
    """

    config: SessionConfig
    depth: Optional[int] = None
    volume_levels: Iterable = ()
    dt: float = 60.0
    snapshot_out: Optional[TextIO] = None
    trades_out: Optional[TextIO] = None
    snapshot_depth: Optional[int] = None
    book: LimitOrderBook = field(init=False)
    averagers: dict = field(init=False)
    volumes: dict = field(init=False)
    added: int = field(init=False, default=0)
    traded: int = field(init=False, default=0)
    cancelled: int = field(init=False, default=0)

    def __post_init__(self):
        self.book = LimitOrderBook(self.config)
        if self.depth is None:
            self.depth = self.book.band_width
        if not 1 <= self.depth <= self.book.band_width:
            raise ValueError(f"depth must lie in [1, {self.book.band_width}]")
        self.averagers = {side: ShapeAverager(self.depth) for side in Side}
        for avg in self.averagers.values():
            avg._reset(self.depth)
        self.volumes = {
            (Side.coerce(side), int(delta)): IntervalAverager(self.dt, self.config)
            for side, delta in self.volume_levels
        }
        for side, delta in self.volumes:
            if not 1 <= delta <= self.depth:
                raise ValueError(f"delta {delta} outside 1..{self.depth}")
        if self.snapshot_out is not None:
            self.snapshot_out.write("t,side,delta,volume\n")
        if self.trades_out is not None:
            self.trades_out.write("t,trade_price,trade_size\n")

    def feed(self, events: Iterable[OrderEvent]) -> "Reconstruction":
        book = self.book
        depth = self.depth
        buy_avg = self.averagers[Side.BUY]
        sell_avg = self.averagers[Side.SELL]
        volumes = list(self.volumes.items())
        snap_out = self.snapshot_out
        snap_depth = min(self.snapshot_depth or depth, depth)
        trades_out = self.trades_out
        tick = self.config.tick_size
        for event in events:
            delta = book.apply(event)
            self.added += delta.added
            self.cancelled += delta.cancelled
            if delta.trades:
                for tr in delta.trades:
                    self.traded += tr.size
                if trades_out is not None:
                    trades_out.write(
                        "".join(f"{delta.t},{tr.price * tick:.2f},{tr.size}\n" for tr in delta.trades)
                    )
            bv = book.depth_view(Side.BUY, depth)
            sv = book.depth_view(Side.SELL, depth)
            buy_avg.add(bv)
            sell_avg.add(sv)
            for (side, d), acc in volumes:
                view = bv if side is Side.BUY else sv
                acc.add(event.wall_time, 0 if view is None else int(view[d - 1]))
            if snap_out is not None:
                t = delta.t
                rows = []
                for name, view in (("buy", bv), ("sell", sv)):
                    if view is None:
                        continue
                    head = view[:snap_depth]
                    for k in np.flatnonzero(head):
                        rows.append(f"{t},{name},{k + 1},{head[k]}\n")
                snap_out.write("".join(rows))
        return self

    def shape(self, side):
        side = Side.coerce(side)
        return self.averagers[side].result(side)


def reconstruct(events: Iterable[OrderEvent], config: SessionConfig, **kwargs) -> Reconstruction:
    return Reconstruction(config, **kwargs).feed(events)
