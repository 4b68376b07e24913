from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from lobshape.orderflow import (
    HEADER,
    Kind,
    OrderEvent,
    RecordRejected,
    RejectReason,
    SessionConfig,
    StreamCorrupt,
    dump_config,
    format_event_record,
    format_wall_time,
    load_config,
    load_stream,
    parse_event_record,
    parse_wall_time,
)


def test_parse_five_field_buy(config):
    ev = parse_event_record("1,09:30:00.01,B,1000,10.00", config)
    assert ev.kind is Kind.BUY
    assert ev.price == 1000
    assert ev.size == 1000
    assert ev.order_ref == 1
    assert ev.wall_time == parse_wall_time("09:30:00.01")


def test_parse_six_field_records(config):
    ev = parse_event_record("7,10:00:00.00,S,42,300,10.05", config)
    assert (ev.kind, ev.order_ref, ev.size, ev.price) == (Kind.SELL, 42, 300, 1005)
    c = parse_event_record("8,10:00:00.50,C,42,,", config)
    assert c.kind is Kind.CANCEL and c.order_ref == 42 and c.size is None and c.price is None


@pytest.mark.parametrize(
    "line, reason",
    [
        ("1,09:30:00.01,B,1,0,10.00", RejectReason.MALFORMED),
        ("1,09:30:00.01,B,1,-5,10.00", RejectReason.MALFORMED),
        ("1,09:30:00.01,B,1,abc,10.00", RejectReason.MALFORMED),
        ("1,09:30:00.01,X,1,10,10.00", RejectReason.MALFORMED),
        ("1,9:30,B,1,10,10.00", RejectReason.MALFORMED),
        ("1,09:30:00.01,B,1,10,ten", RejectReason.MALFORMED),
        ("1,09:30:00.01,C,,,", RejectReason.MALFORMED),
        ("1,09:30:00.01,B,10", RejectReason.MALFORMED),
        ("1,09:30:00.01,B,1,10,10.005", RejectReason.OFF_GRID),
        ("1,09:30:00.01,B,1,10,11.01", RejectReason.OUT_OF_BAND),
        ("1,09:30:00.01,S,1,10,8.99", RejectReason.OUT_OF_BAND),
        ("1,09:20:00.00,B,1,10,10.00", RejectReason.OUT_OF_SESSION),
        ("1,12:00:00.00,B,1,10,10.00", RejectReason.OUT_OF_SESSION),
    ],
)
def test_rejections(config, line, reason):
    with pytest.raises(RecordRejected) as info:
        parse_event_record(line, config)
    assert info.value.reason is reason


def test_band_edges_by_hand():
    # prev close 10.00, 10%: round(1000 * 0.9) = 900, round(1000 * 1.1) = 1100
    cfg = SessionConfig(prev_close=1000)
    assert cfg.band == (900, 1100)
    assert parse_event_record("1,09:30:00.01,B,1,10,11.00", cfg).price == 1100
    assert parse_event_record("1,09:30:00.01,B,1,10,9.00", cfg).price == 900
    # half-tick products round half up: 1005 * 1.1 = 1105.5 -> 1106, 1005 * 0.9 = 904.5 -> 905
    assert SessionConfig(prev_close=1005).band == (905, 1106)


def test_config_validation():
    with pytest.raises(ValueError):
        SessionConfig(tick_size=0)
    with pytest.raises(ValueError):
        SessionConfig(limit_fraction=1)
    with pytest.raises(ValueError):
        SessionConfig(limit_fraction=0)


def test_wall_time_roundtrip():
    for text in ("00:00:00.00", "09:30:00.01", "14:59:59.99", "23:59:59.99"):
        assert format_wall_time(parse_wall_time(text)) == text


def _lines(*records):
    return [HEADER + "\n"] + [r + "\n" for r in records]


def test_load_stream_numbers_events(config):
    recs = [f"{i},09:30:0{i}.00,B,{i},100,10.0{i}" for i in range(1, 6)]
    events, report = load_stream(_lines(*recs), config)
    assert [e.seq for e in events] == [1, 2, 3, 4, 5]
    assert report.invalid_count == 0
    assert report.records_read == 5


def test_load_stream_counts_invalid(config):
    recs = [f"{i},09:30:0{i}.00,B,{i},100,10.00" for i in range(1, 6)]
    recs[2] = "3,09:30:03.00,B,3,0,10.00"
    events, report = load_stream(_lines(*recs), config)
    assert len(events) == 4
    assert [e.seq for e in events] == [1, 2, 3, 4]
    assert report.invalid_count == 1
    assert report.reasons["Malformed"] == 1
    assert report.emitted + report.invalid_count == report.records_read


def test_wall_time_regression_is_fatal(config):
    recs = ["1,09:31:00.00,B,1,100,10.00", "2,09:30:00.00,B,2,100,10.00"]
    with pytest.raises(StreamCorrupt):
        load_stream(_lines(*recs), config)


def test_config_file_roundtrip(tmp_path):
    cfg = SessionConfig(tick_size=Decimal("0.01"), prev_close=1234, limit_fraction=Decimal("0.1"))
    path = tmp_path / "s.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    path.write_text("tick_size = 0.01\nprev_close = 20.00\nsession = none\n")
    loaded = load_config(path)
    assert loaded.prev_close == 2000 and loaded.session_windows == ()
    path.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        load_config(path)


in_session_times = st.one_of(
    st.integers(parse_wall_time("09:30:00.00"), parse_wall_time("11:30:00.00")),
    st.integers(parse_wall_time("13:00:00.00"), parse_wall_time("15:00:00.00")),
)
limit_events = st.builds(
    OrderEvent,
    seq=st.integers(1, 10**9),
    wall_time=in_session_times,
    kind=st.sampled_from([Kind.BUY, Kind.SELL]),
    order_ref=st.integers(1, 10**12),
    size=st.integers(1, 10**7),
    price=st.integers(900, 1100),
)
cancel_events = st.builds(
    OrderEvent,
    seq=st.integers(1, 10**9),
    wall_time=in_session_times,
    kind=st.just(Kind.CANCEL),
    order_ref=st.integers(1, 10**12),
    size=st.none() | st.integers(0, 10**6),
    price=st.none() | st.integers(900, 1100),
)


@given(st.one_of(limit_events, cancel_events))
def test_roundtrip_serialisation(ev):
    cfg = SessionConfig()
    assert parse_event_record(format_event_record(ev, cfg), cfg) == ev


@given(st.lists(st.one_of(limit_events, st.text(max_size=30).filter(lambda s: "\n" not in s and "\r" not in s)), max_size=40))
def test_partition_and_consecutive_seq(items):
    cfg = SessionConfig()
    lines = []
    for it in items:
        if isinstance(it, OrderEvent):
            it = OrderEvent(it.seq, parse_wall_time("10:00:00.00"), it.kind, it.order_ref, it.size, it.price)
            lines.append(format_event_record(it, cfg))
        elif it.strip() and not it.startswith("seq"):
            lines.append(it)
    events, report = load_stream(["seq,header\n"] + [l + "\n" for l in lines], cfg)
    assert report.emitted + report.invalid_count == report.records_read == len(lines)
    assert [e.seq for e in events] == list(range(1, len(events) + 1))
