"""Deliberately naive oracles: a full-scan matcher and brute-force book walks."""
from __future__ import annotations

import random

from lobshape.orderflow import Kind, OrderEvent


class ReferenceMatcher:
    """Keeps every resting order in one flat list and rescans it for every fill."""

    def __init__(self):
        self.orders = []  # [side, price, arrival, ref, size]
        self.arrival = 0

    def apply(self, ev: OrderEvent):
        if ev.kind is Kind.CANCEL:
            for i, o in enumerate(self.orders):
                if o[3] == ev.order_ref:
                    del self.orders[i]
                    return (), 0, o[4]
            raise KeyError(ev.order_ref)
        side = "buy" if ev.kind is Kind.BUY else "sell"
        remaining = ev.size
        trades = []
        while remaining:
            best = None
            for o in self.orders:
                if o[0] == side:
                    continue
                if side == "buy" and o[1] > ev.price or side == "sell" and o[1] < ev.price:
                    continue
                if best is None:
                    best = o
                elif side == "buy" and (o[1], o[2]) < (best[1], best[2]):
                    best = o
                elif side == "sell" and (-o[1], o[2]) < (-best[1], best[2]):
                    best = o
            if best is None:
                break
            fill = min(remaining, best[4])
            trades.append((best[1], fill, best[3]))
            remaining -= fill
            best[4] -= fill
            if best[4] == 0:
                self.orders.remove(best)
        if remaining:
            self.arrival += 1
            self.orders.append([side, ev.price, self.arrival, ev.order_ref, remaining])
        return tuple(trades), remaining, 0

    def state(self):
        bids = sorted((o for o in self.orders if o[0] == "buy"), key=lambda o: (-o[1], o[2]))
        asks = sorted((o for o in self.orders if o[0] == "sell"), key=lambda o: (o[1], o[2]))
        return [(o[0], o[1], o[3], o[4]) for o in bids + asks]

    def volumes(self, side):
        out = {}
        for o in self.orders:
            if o[0] == side:
                out[o[1]] = out.get(o[1], 0) + o[4]
        return out


def delta_tuple(delta):
    return tuple((t.price, t.size, t.maker_ref) for t in delta.trades), delta.added, delta.cancelled


def random_stream(rng: random.Random, n: int, mid: int = 1000, spread: int = 6, cancel_p: float = 0.25):
    """Random valid events around ``mid``; cancels only target orders the oracle still holds."""
    ref_matcher = ReferenceMatcher()
    events = []
    next_ref = 1
    for seq in range(1, n + 1):
        live = [o[3] for o in ref_matcher.orders]
        if live and rng.random() < cancel_p:
            ev = OrderEvent(seq, 3420000 + seq, Kind.CANCEL, rng.choice(live))
        else:
            kind = Kind.BUY if rng.random() < 0.5 else Kind.SELL
            price = mid + rng.randint(-spread, spread)
            size = rng.choice([1, 5, 10, 30, 50, 100, rng.randint(1, 300)])
            ev = OrderEvent(seq, 3420000 + seq, kind, next_ref, size, price)
            next_ref += 1
        ref_matcher.apply(ev)
        events.append(ev)
    return events


def brute_snapshot(matcher: ReferenceMatcher, side: str, depth: int):
    vols = matcher.volumes(side)
    out = [0] * depth
    if not vols:
        return out
    best = max(vols) if side == "buy" else min(vols)
    for price, v in vols.items():
        d = (best - price if side == "buy" else price - best) + 1
        if d <= depth:
            out[d - 1] += v
    return out


def brute_impact(levels, omega):
    """Walk depth levels one at a time; returns (n, saturated)."""
    total = sum(levels)
    if total == 0:
        raise ValueError("no liquidity")
    if omega >= total:
        deepest = max(i + 1 for i, v in enumerate(levels) if v > 0)
        return deepest, True
    acc = 0
    n = 0
    for i, v in enumerate(levels):
        acc += v
        if acc <= omega:
            n = i + 1
        else:
            break
    return n, False
