import io
import math

import numpy as np
import pytest

from lobshape.book import LimitOrderBook
from lobshape.orderflow import Kind, SessionConfig, load_stream
from lobshape.shape import ExponentialTailFit, locate_maximum
from lobshape.synthgen import (
    FgnParams,
    FlowParams,
    OrderFlowGenerator,
    fgn_autocovariance,
    generate_fgn,
    generate_order_flow,
    generate_planted_shape,
    sample_powerlaw_lognormal,
    write_order_flow,
)


def known_mean_acov(x, k):
    n = x.size
    return float(x[: n - k] @ x[k:]) / (n - k)


# -- fGn -----------------------------------------------------------------------

def test_fgn_autocovariance_values():
    assert fgn_autocovariance(0.5, [0, 1, 5]).tolist() == [1.0, 0.0, 0.0]
    assert fgn_autocovariance(0.8, 1) == pytest.approx(2 ** 0.6 - 1)
    assert fgn_autocovariance(0.8, 1) == pytest.approx(0.5157, abs=1e-4)


def test_fgn_is_deterministic_per_seed():
    a = generate_fgn(0.8, 1024, seed=4)
    assert np.array_equal(a, generate_fgn(0.8, 1024, seed=4))
    assert not np.array_equal(a, generate_fgn(0.8, 1024, seed=5))


@pytest.mark.parametrize("bad", [dict(hurst=0.8, n=1000), dict(hurst=1.0, n=1024), dict(hurst=0.0, n=8)])
def test_fgn_parameter_checks(bad):
    with pytest.raises(ValueError):
        FgnParams(**bad)


def test_fgn_white_noise_at_half():
    x = generate_fgn(0.5, 2**15, seed=0)
    assert abs(x.mean()) < 4 / math.sqrt(x.size)
    assert abs(x.var() - 1) < 0.05
    assert abs(known_mean_acov(x, 1)) < 4 / math.sqrt(x.size)


def test_fgn_lag_one():
    x = generate_fgn(0.8, 2**16, seed=0)
    assert abs(known_mean_acov(x, 1) - 0.5157) < 0.02


def test_fgn_covariance_within_standard_error():
    n, seeds = 2**15, 20
    lags = np.arange(1, 11)
    est = np.array([[known_mean_acov(generate_fgn(0.8, n, s), k) for k in lags] for s in range(seeds)])
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(seeds)
    assert np.all(np.abs(mean - fgn_autocovariance(0.8, lags)) < 3 * se)


# -- planted fixtures --------------------------------------------------------------

def test_planted_shapes():
    exp = generate_planted_shape("exponential", beta=0.05, scale=10.0, depth=20)
    np.testing.assert_allclose(exp.V, 10 * np.exp(-0.05 * np.arange(1, 21)))
    assert locate_maximum(generate_planted_shape("mode", delta_max=7)) == 7
    per = generate_planted_shape("periodic", boost=2.0, beta=0.0, depth=12)
    assert per.V.tolist() == [2e4, 1e4, 1e4, 1e4, 1e4, 2e4, 1e4, 1e4, 1e4, 1e4, 2e4, 1e4]
    assert generate_planted_shape("truncated", cutoff=5, depth=8).V[5:].tolist() == [0, 0, 0]
    noisy = generate_planted_shape("exponential", noise=0.05, seed=3)
    assert np.array_equal(noisy.V, generate_planted_shape("exponential", noise=0.05, seed=3).V)
    with pytest.raises(ValueError):
        generate_planted_shape("spiral")
    with pytest.raises(TypeError):
        generate_planted_shape("exponential", colour="red")


def test_powerlaw_sampler_left_tail():
    v = sample_powerlaw_lognormal(200_000, 3.0, 3.0, 7.5, 1.0, seed=0)
    x = np.log(v)
    xc = 3 * math.log(10)
    left = x[x < xc]
    # below the crossover, xc - x is exponential with rate beta
    assert np.mean(xc - left) == pytest.approx(1 / 3.0, rel=0.02)
    assert np.array_equal(v, sample_powerlaw_lognormal(200_000, 3.0, 3.0, 7.5, 1.0, seed=0))


# -- order flow ----------------------------------------------------------------

def small(**kw):
    kw.setdefault("n_events", 3000)
    return FlowParams(**kw)


def lines_of(params):
    return list(OrderFlowGenerator(params).lines())


def test_same_seed_same_bytes():
    p = small(seed=9, invalid_fraction=0.02)
    assert lines_of(p) == lines_of(p)
    assert lines_of(p) != lines_of(small(seed=10, invalid_fraction=0.02))


def test_no_cancels_when_cancel_share_is_zero():
    events, ledger = generate_order_flow(small(mix=(0.5, 0.5, 0.0)))
    assert ledger.counts["C"] == 0
    assert all(e.kind is not Kind.CANCEL for e in events)


def test_stream_replays_without_errors():
    params = small(n_events=5000, resting_target=500, seed=2)
    events, ledger = generate_order_flow(params)
    assert [e.seq for e in events] == list(range(1, 5001))
    walls = [e.wall_time for e in events]
    assert walls == sorted(walls)
    assert all(params.config.in_session(w) for w in walls)
    book = LimitOrderBook(params.config)
    traded = 0
    for e in events:
        traded += book.apply(e).traded
    book.check_invariants()
    assert traded == ledger.traded_volume > 0
    assert ledger.counts["C"] > 0


def test_report_matches_ledger():
    params = small(n_events=4000, invalid_fraction=0.03, seed=5)
    gen = OrderFlowGenerator(params)
    text = "\n".join(gen.lines()) + "\n"
    ledger = gen.ledger
    events, report = load_stream(io.StringIO(text), params.config)
    assert report.invalid_count == ledger.invalid_count > 0
    assert dict(report.reasons) == {k: v for k, v in ledger.invalid.items() if v}
    assert dict(report.counts) == {k: v for k, v in ledger.counts.items() if v}
    assert report.records_read == ledger.records
    assert len(events) == params.n_events
    book = LimitOrderBook(params.config)
    for e in events:
        book.apply(e)


def test_clean_stream_has_no_rejections(tmp_path):
    params = small(n_events=2000, seed=1)
    ledger = write_order_flow(params, tmp_path / "ev.csv")
    with open(tmp_path / "ev.csv", encoding="utf-8") as fh:
        events, report = load_stream(fh, params.config)
    assert report.invalid_count == 0 and len(events) == 2000
    assert sum(ledger.interval_counts.values()) == 2000


def test_resting_target_bounds_the_book():
    # cancels scale with the live count, so the book settles at a few
    # multiples of the target instead of growing with the stream
    sizes = []
    for n in (20_000, 60_000):
        gen = OrderFlowGenerator(small(n_events=n, resting_target=400, seed=3))
        for _ in gen:
            pass
        sizes.append(len(gen.book.order_index))
    assert max(sizes) < 5 * 400
    assert sizes[1] < 1.3 * sizes[0]


def test_exponential_placement_recovered():
    params = small(n_events=100_000, resting_target=5000, seed=7, placement_rate=0.044)
    _, ledger = generate_order_flow(params)
    for side in ("buy", "sell"):
        levels = ledger.placement_volume[side]
        d = np.arange(1, 61)
        counts = np.array([levels.get(k, 0) for k in d], dtype=float)
        assert counts.min() > 0
        # placement volume is count times a size independent of depth
        fit = ExponentialTailFit((1, 60)).fit(d, counts)
        assert abs(fit.beta_ - 0.044) / 0.044 < 0.05


def test_uniform_placement_stays_within_depth():
    params = small(placement="uniform", placement_depth=10, marketable_fraction=0.0, inside_fraction=0.0)
    _, ledger = generate_order_flow(params)
    assert max(max(v) for v in ledger.placement_volume.values()) <= 10


@pytest.mark.parametrize(
    "bad",
    [dict(mix=(0.5, 0.5, 0.5)), dict(placement="pareto"), dict(resting_target=0),
     dict(marketable_fraction=0.6, inside_fraction=0.5), dict(placement_depth=10**6)],
)
def test_flow_parameter_checks(bad):
    with pytest.raises(ValueError):
        FlowParams(**bad)


def test_narrow_band_rejected():
    from decimal import Decimal

    with pytest.raises(ValueError):
        FlowParams(config=SessionConfig(prev_close=5, limit_fraction=Decimal("0.1")))
