"""Order-flow records: parsing, validation and stream loading.

Prices are carried as integer tick counts and wall-clock times as integer
centiseconds since midnight, so every comparison on the hot path is exact.
"""
from __future__ import annotations

import enum
import io
import os
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Iterable, Iterator, Optional, Union

__all__ = [
    "Kind",
    "RejectReason",
    "RecordRejected",
    "StreamCorrupt",
    "OrderEvent",
    "SessionConfig",
    "StreamReport",
    "HEADER",
    "parse_event_record",
    "format_event_record",
    "parse_wall_time",
    "format_wall_time",
    "iter_stream",
    "load_stream",
    "load_config",
    "dump_config",
]

HEADER = "seq,wall_time,kind,order_ref,size,price"


class Kind(str, enum.Enum):
    BUY = "B"
    SELL = "S"
    CANCEL = "C"


class RejectReason(str, enum.Enum):
    MALFORMED = "Malformed"
    OFF_GRID = "OffGrid"
    OUT_OF_BAND = "OutOfBand"
    OUT_OF_SESSION = "OutOfSession"


class RecordRejected(ValueError):
    """Raised by :func:`parse_event_record` for a record that must be skipped."""

    def __init__(self, reason: RejectReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


class StreamCorrupt(RuntimeError):
    """Raised when the stream itself is unusable (e.g. wall time goes backwards)."""


@dataclass(frozen=True)
class OrderEvent:
    seq: int
    wall_time: int  # centiseconds since midnight
    kind: Kind
    order_ref: int
    size: Optional[int] = None  # shares; None only for cancels
    price: Optional[int] = None  # ticks; None only for cancels

    @property
    def is_limit(self) -> bool:
        return self.kind is not Kind.CANCEL


def parse_wall_time(text: str) -> int:
    """``HH:MM:SS.ss`` -> centiseconds since midnight."""
    hh, mm, rest = text.strip().split(":")
    if "." in rest:
        ss, frac = rest.split(".")
        if len(frac) != 2:
            raise ValueError(f"wall time needs two fractional digits: {text!r}")
    else:
        ss, frac = rest, "00"
    h, m, s, cs = int(hh), int(mm), int(ss), int(frac)
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60 and 0 <= cs < 100):
        raise ValueError(f"wall time out of range: {text!r}")
    return ((h * 60 + m) * 60 + s) * 100 + cs


def format_wall_time(cs: int) -> str:
    s, frac = divmod(int(cs), 100)
    m, s = divmod(s, 60)
    h, m = divmod(m, 60)
    return f"{h:02d}:{m:02d}:{s:02d}.{frac:02d}"


def _default_windows() -> tuple[tuple[int, int], ...]:
    # exchange continuous auction, morning and afternoon
    return (
        (parse_wall_time("09:30:00.00"), parse_wall_time("11:30:00.00")),
        (parse_wall_time("13:00:00.00"), parse_wall_time("15:00:00.00")),
    )


@dataclass(frozen=True)
class SessionConfig:
    """Instrument/session constants needed to validate and rebuild a book.

    ``prev_close`` is in ticks. Session windows are closed intervals of
    centiseconds since midnight.
    """

    tick_size: Decimal = Decimal("0.01")
    prev_close: int = 1000
    limit_fraction: Decimal = Decimal("0.10")
    session_windows: tuple[tuple[int, int], ...] = field(default_factory=_default_windows)

    def __post_init__(self):
        object.__setattr__(self, "tick_size", Decimal(str(self.tick_size)))
        object.__setattr__(self, "limit_fraction", Decimal(str(self.limit_fraction)))
        object.__setattr__(self, "prev_close", int(self.prev_close))
        object.__setattr__(
            self, "session_windows", tuple((int(a), int(b)) for a, b in self.session_windows)
        )
        if self.tick_size <= 0:
            raise ValueError("tick_size must be positive")
        if not (0 < self.limit_fraction < 1):
            raise ValueError("limit_fraction must lie in (0, 1)")
        if self.prev_close <= 0:
            raise ValueError("prev_close must be positive")
        for a, b in self.session_windows:
            if a > b:
                raise ValueError(f"session window ({a}, {b}) is reversed")

    @property
    def band(self) -> tuple[int, int]:
        """Inclusive ``(lo, hi)`` price limits in ticks."""
        pc = Decimal(self.prev_close)
        lo = (pc * (1 - self.limit_fraction)).to_integral_value(ROUND_HALF_UP)
        hi = (pc * (1 + self.limit_fraction)).to_integral_value(ROUND_HALF_UP)
        return int(lo), int(hi)

    @property
    def band_width(self) -> int:
        lo, hi = self.band
        return hi - lo + 1

    def in_session(self, wall_time: int) -> bool:
        if not self.session_windows:
            return True
        return any(a <= wall_time <= b for a, b in self.session_windows)

    def price_to_ticks(self, text: str) -> int:
        """Currency string -> ticks; raises RecordRejected off the grid."""
        try:
            value = Decimal(text.strip())
        except InvalidOperation:
            raise RecordRejected(RejectReason.MALFORMED, f"price {text!r}") from None
        if not value.is_finite():
            raise RecordRejected(RejectReason.MALFORMED, f"price {text!r}")
        ticks = value / self.tick_size
        if ticks != ticks.to_integral_value():
            raise RecordRejected(RejectReason.OFF_GRID, f"price {text!r}")
        return int(ticks)

    def ticks_to_price(self, ticks: int) -> str:
        return f"{Decimal(ticks) * self.tick_size:.2f}"


@dataclass
class StreamReport:
    records_read: int = 0
    counts: Counter = field(default_factory=Counter)
    invalid_count: int = 0
    reasons: Counter = field(default_factory=Counter)

    def count_event(self, event: OrderEvent) -> None:
        self.records_read += 1
        self.counts[event.kind.value] += 1

    def count_rejection(self, reason: RejectReason) -> None:
        self.records_read += 1
        self.invalid_count += 1
        self.reasons[reason.value] += 1

    @property
    def emitted(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "records_read": self.records_read,
            "counts": {k.value: self.counts.get(k.value, 0) for k in Kind},
            "invalid_count": self.invalid_count,
            "reasons": {r.value: self.reasons.get(r.value, 0) for r in RejectReason},
        }


def _parse_int(text: str, what: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        raise RecordRejected(RejectReason.MALFORMED, f"{what} {text!r}") from None


def parse_event_record(line: str, config: SessionConfig) -> OrderEvent:
    """Parse one CSV record of the order-flow wire format.

    The canonical layout is ``seq,wall_time,kind,order_ref,size,price``. A
    five-field layout without ``order_ref`` is also accepted for limit
    orders; the record's ``seq`` then doubles as its reference.

    Raises
    ------
    RecordRejected
        With reason Malformed, OffGrid, OutOfBand or OutOfSession.
    """
    fields = line.rstrip("\r\n").split(",")
    if len(fields) == 5:
        fields = fields[:3] + [""] + fields[3:]
    if len(fields) != 6:
        raise RecordRejected(RejectReason.MALFORMED, f"expected 6 fields, got {len(fields)}")
    seq_s, time_s, kind_s, ref_s, size_s, price_s = fields

    seq = _parse_int(seq_s, "seq")
    try:
        wall_time = parse_wall_time(time_s)
    except ValueError:
        raise RecordRejected(RejectReason.MALFORMED, f"wall_time {time_s!r}") from None
    try:
        kind = Kind(kind_s.strip())
    except ValueError:
        raise RecordRejected(RejectReason.MALFORMED, f"kind {kind_s!r}") from None

    if kind is Kind.CANCEL:
        if not ref_s.strip():
            raise RecordRejected(RejectReason.MALFORMED, "cancel without order_ref")
        order_ref = _parse_int(ref_s, "order_ref")
        size = _parse_int(size_s, "size") if size_s.strip() else None
        price = config.price_to_ticks(price_s) if price_s.strip() else None
        if size is not None and size < 0:
            raise RecordRejected(RejectReason.MALFORMED, f"size {size}")
    else:
        order_ref = _parse_int(ref_s, "order_ref") if ref_s.strip() else seq
        size = _parse_int(size_s, "size")
        if size <= 0:
            raise RecordRejected(RejectReason.MALFORMED, f"size {size}")
        if not price_s.strip():
            raise RecordRejected(RejectReason.MALFORMED, "missing price")
        price = config.price_to_ticks(price_s)
        lo, hi = config.band
        if not lo <= price <= hi:
            raise RecordRejected(RejectReason.OUT_OF_BAND, f"price {price} outside [{lo}, {hi}]")

    if not config.in_session(wall_time):
        raise RecordRejected(RejectReason.OUT_OF_SESSION, time_s.strip())
    return OrderEvent(seq, wall_time, kind, order_ref, size, price)


def format_event_record(event: OrderEvent, config: SessionConfig) -> str:
    size = "" if event.size is None else str(event.size)
    price = "" if event.price is None else config.ticks_to_price(event.price)
    return (
        f"{event.seq},{format_wall_time(event.wall_time)},{event.kind.value},"
        f"{event.order_ref},{size},{price}"
    )


Source = Union[str, os.PathLike, Iterable[str]]


def _open_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield from fh
    elif isinstance(source, io.TextIOBase):
        yield from source
    else:
        yield from source


def iter_stream(
    source: Source, config: SessionConfig, report: Optional[StreamReport] = None
) -> Iterator[OrderEvent]:
    """Yield validated events lazily, renumbered 1, 2, ... in input order.

    ``report`` is updated as the stream is consumed. Rejected records are
    counted and skipped; a wall-time regression raises :class:`StreamCorrupt`.
    """
    if report is None:
        report = StreamReport()
    last_time = None
    seq = 0
    first = True
    for line in _open_lines(source):
        if first:
            first = False
            if line.startswith("seq"):
                continue
        if not line.strip():
            continue
        try:
            event = parse_event_record(line, config)
        except RecordRejected as exc:
            report.count_rejection(exc.reason)
            continue
        if last_time is not None and event.wall_time < last_time:
            raise StreamCorrupt(
                f"wall time regression at record seq={event.seq}: "
                f"{format_wall_time(event.wall_time)} < {format_wall_time(last_time)}"
            )
        last_time = event.wall_time
        seq += 1
        event = OrderEvent(seq, event.wall_time, event.kind, event.order_ref, event.size, event.price)
        report.count_event(event)
        yield event


def load_stream(source: Source, config: SessionConfig) -> tuple[list[OrderEvent], StreamReport]:
    report = StreamReport()
    events = list(iter_stream(source, config, report))
    return events, report


# -- session config files ---------------------------------------------------

def load_config(path: Union[str, os.PathLike]) -> SessionConfig:
    """Read a ``key = value`` session config file.

    Recognised keys: ``tick_size``, ``prev_close`` (currency units),
    ``limit_fraction`` and ``session`` (comma-separated ``HH:MM:SS.ss-HH:MM:SS.ss``
    windows; ``none`` disables the session filter).
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    unknown = set(values) - {"tick_size", "prev_close", "limit_fraction", "session"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    tick = Decimal(values.get("tick_size", "0.01"))
    kwargs: dict = {"tick_size": tick}
    if "limit_fraction" in values:
        kwargs["limit_fraction"] = Decimal(values["limit_fraction"])
    if "prev_close" in values:
        pc = Decimal(values["prev_close"]) / tick
        if pc != pc.to_integral_value():
            raise ValueError("prev_close is not on the tick grid")
        kwargs["prev_close"] = int(pc)
    if "session" in values:
        windows_text = values["session"]
        windows = []
        if windows_text.lower() != "none":
            for chunk in windows_text.split(","):
                a, b = chunk.strip().split("-")
                windows.append((parse_wall_time(a), parse_wall_time(b)))
        kwargs["session_windows"] = tuple(windows)
    return SessionConfig(**kwargs)


def dump_config(config: SessionConfig) -> str:
    if config.session_windows:
        session = ", ".join(
            f"{format_wall_time(a)}-{format_wall_time(b)}" for a, b in config.session_windows
        )
    else:
        session = "none"
    return (
        f"tick_size = {config.tick_size}\n"
        f"prev_close = {config.ticks_to_price(config.prev_close)}\n"
        f"limit_fraction = {config.limit_fraction}\n"
        f"session = {session}\n"
    )
