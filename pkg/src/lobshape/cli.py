"""Command-line entry point: ``lobshape <command> ...``.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .book import BookError, InvariantViolation, NoLiquidity, Side
from .orderflow import (
    SessionConfig,
    StreamCorrupt,
    StreamReport,
    dump_config,
    iter_stream,
    load_config,
)
from .pipeline import Reconstruction
from .shape import AveragedShape, ExponentialTailFit, PeriodicPeakDetector, locate_maximum
from .synthgen import FlowParams, write_order_flow
from .volstats import (
    DetrendedFluctuation,
    LognormalFit,
    PowerLawTailFit,
    VolumeSeries,
    autocorrelation,
    empirical_log_pdf,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_range(text: Optional[str]):
    if text is None:
        return None
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise UsageError(f"--range expects lo:hi, got {text!r}") from None


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "lobshape": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def _manifest(args, inputs) -> dict:
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("out", "jobs", "func", "inputs", "input", "config") and v is not None
    }
    config_path = getattr(args, "config", None)
    return {
        "command": args.command,
        "flags": flags,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "config": None if config_path is None else {"path": str(config_path), "sha256": _sha256(config_path)},
        "seeds": [args.seed] if getattr(args, "seed", None) is not None else [],
        "versions": _versions(),
    }


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _finish(out: Path, manifest: dict, outputs: list) -> None:
    manifest = dict(manifest)
    manifest["outputs"] = {Path(p).name: _sha256(p) for p in outputs}
    _write_json(out / "manifest.json", manifest)


def _config(args) -> SessionConfig:
    if args.config is None:
        return SessionConfig()
    return load_config(args.config)


def _reconstruct_file(path, config, **kwargs) -> tuple[Reconstruction, StreamReport]:
    report = StreamReport()
    rec = Reconstruction(config, **kwargs)
    rec.feed(iter_stream(path, config, report))
    return rec, report


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _config(args)
    mix = tuple(float(x) for x in args.mix.split(","))
    params = FlowParams(
        n_events=args.events,
        mix=mix,
        placement=args.placement,
        placement_rate=args.rate,
        placement_depth=args.placement_depth,
        size_mu=args.size_mu,
        size_sigma=args.size_sigma,
        invalid_fraction=args.invalid_fraction,
        resting_target=args.resting_target,
        seed=args.seed,
        dt=args.dt,
        config=config,
    )
    events = out / "events.csv"
    ledger = write_order_flow(params, events)
    cfg_path = out / "session.cfg"
    cfg_path.write_text(dump_config(config), encoding="utf-8")
    ledger_path = out / "ledger.json"
    doc = ledger.to_dict()
    doc["params"] = params.to_dict()
    manifest = _manifest(args, [])
    doc["manifest"] = manifest
    _write_json(ledger_path, doc)
    _finish(out, manifest, [events, cfg_path, ledger_path])
    return EXIT_OK


def _build_one(path, out: Path, config: SessionConfig, depth, snapshots: bool, snapshot_depth, manifest):
    out.mkdir(parents=True, exist_ok=True)
    snap_path, trades_path, report_path = out / "snapshots.csv", out / "trades.csv", out / "stream_report.json"
    outputs = [trades_path, report_path]
    with open(trades_path, "w", encoding="utf-8", newline="") as tfh:
        sfh = open(snap_path, "w", encoding="utf-8", newline="") if snapshots else None
        try:
            rec, report = _reconstruct_file(
                path, config, depth=depth, snapshot_out=sfh, trades_out=tfh,
                snapshot_depth=snapshot_depth,
            )
        finally:
            if sfh is not None:
                sfh.close()
    if snapshots:
        outputs.insert(0, snap_path)
    book = rec.book
    doc = report.to_dict()
    doc["events_applied"] = book.t
    doc["volume"] = {"added": rec.added, "traded": rec.traded, "cancelled": rec.cancelled}
    doc["final_book"] = {
        "best_bid": book.best_bid,
        "best_ask": book.best_ask,
        "resting_orders": len(book.order_index),
        "resting_volume": {"buy": book.total_volume[0], "sell": book.total_volume[1]},
    }
    doc["manifest"] = manifest
    _write_json(report_path, doc)
    _finish(out, manifest, outputs)


def cmd_build(args) -> int:
    config = _config(args)
    inputs = [Path(p) for p in args.inputs]
    out = Path(args.out)
    jobs = []
    for path in inputs:
        sub = out if len(inputs) == 1 else out / path.stem
        jobs.append((path, sub, config, args.depth, not args.no_snapshots, args.snapshot_depth,
                     _manifest(args, [path])))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for fut in [pool.submit(_build_one, *job) for job in jobs]:
                fut.result()
    else:
        for job in jobs:
            _build_one(*job)
    return EXIT_OK


def cmd_shape(args) -> int:
    config = _config(args)
    side = Side.coerce(args.side)
    fit_range = _parse_range(args.range)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec, report = _reconstruct_file(args.input, config, depth=args.depth)
    if rec.book.t == 0:
        raise ValueError("stream holds no valid events")
    shape = rec.shape(side)
    manifest = _manifest(args, [args.input])
    shape_path = out / f"shape_{side.value}.csv"
    shape.to_csv(shape_path)
    summary_path = out / f"shape_{side.value}.json"
    _write_json(summary_path, {
        "side": side.value, "M": shape.M, "depth": shape.depth,
        "delta_max": locate_maximum(shape), "manifest": manifest,
    })
    outputs = [shape_path, summary_path]
    peaks_path = out / f"peaks_{side.value}.json"
    if shape.depth >= 2 * args.period + 1:
        peaks = PeriodicPeakDetector(args.period, args.threshold).fit(shape).report()
    else:
        peaks = {"error": f"depth {shape.depth} too shallow for period {args.period}"}
    peaks["manifest"] = manifest
    _write_json(peaks_path, peaks)
    outputs.append(peaks_path)
    if fit_range is not None:
        fit = ExponentialTailFit((int(fit_range[0]), int(fit_range[1]))).fit(shape).report()
        fit["manifest"] = manifest
        fit_path = out / f"fit_{side.value}.json"
        _write_json(fit_path, fit)
        outputs.append(fit_path)
    _finish(out, manifest, outputs)
    return EXIT_OK


def cmd_impact(args) -> int:
    config = _config(args)
    side = Side.coerce(args.side)
    try:
        omegas = [int(w) for w in args.omega.split(",")]
    except ValueError:
        raise UsageError(f"--omega expects comma-separated integers, got {args.omega!r}") from None
    if any(w < 0 for w in omegas):
        raise UsageError("--omega values must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = StreamReport()
    rec = Reconstruction(config, depth=1)
    book = rec.book
    sums = [0] * len(omegas)
    saturated = [0] * len(omegas)
    liquid = 0
    for event in iter_stream(args.input, config, report):
        book.apply(event)
        try:
            impacts = [book.impact(side, w) for w in omegas]
        except NoLiquidity:
            continue
        liquid += 1
        for i, imp in enumerate(impacts):
            sums[i] += imp.ticks
            saturated[i] += imp.saturated
    manifest = _manifest(args, [args.input])
    csv_path = out / f"impact_{side.value}.csv"
    rows = []
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("omega,mean_impact_ticks,saturated_fraction,events_with_liquidity\n")
        for w, s, k in zip(omegas, sums, saturated):
            mean = s / liquid if liquid else float("nan")
            frac = k / liquid if liquid else float("nan")
            fh.write(f"{w},{mean!r},{frac!r},{liquid}\n")
            rows.append({"omega": w, "mean_impact_ticks": mean, "saturated_fraction": frac})
    json_path = out / f"impact_{side.value}.json"
    _write_json(json_path, {
        "side": side.value, "tick_size": str(config.tick_size), "events": book.t,
        "events_with_liquidity": liquid, "impact": rows, "manifest": manifest,
    })
    _finish(out, manifest, [csv_path, json_path])
    return EXIT_OK


def cmd_volumes(args) -> int:
    config = _config(args)
    side = Side.coerce(args.side)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec, report = _reconstruct_file(
        args.input, config, depth=max(args.delta, 1), volume_levels=[(side, args.delta)], dt=args.dt
    )
    series = rec.volumes[(side, args.delta)].series(args.delta)
    manifest = _manifest(args, [args.input])
    stem = f"{side.value}_d{args.delta}"
    series_path = out / f"series_{stem}.csv"
    series.to_csv(series_path)
    outputs = [series_path]
    doc = {
        "side": side.value, "delta": args.delta, "dt": args.dt,
        "intervals": len(series), "gaps": list(series.gaps),
    }
    positive, dropped = series.positive()
    doc["zero_dropped"] = dropped
    if positive.size >= 2:
        pdf = empirical_log_pdf(series, bins=_bins(args.bins))
        pdf_path = out / f"logpdf_{stem}.csv"
        pdf.to_csv(pdf_path)
        outputs.append(pdf_path)
    if positive.size >= LognormalFit.min_samples and np.ptp(positive) > 0:
        doc["lognormal"] = LognormalFit().fit(series).report()
    else:
        doc["lognormal"] = None
    doc["manifest"] = manifest
    json_path = out / f"volumes_{stem}.json"
    _write_json(json_path, doc)
    outputs.append(json_path)
    _finish(out, manifest, outputs)
    return EXIT_OK


def _bins(text):
    if text is None:
        return "fd"
    try:
        return int(text)
    except ValueError:
        return text


def cmd_dfa(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = VolumeSeries.from_csv(args.input)
    fit_range = _parse_range(args.range)
    est = DetrendedFluctuation(min_box=args.min_box, order=args.order, fit_range=fit_range).fit(series)
    manifest = _manifest(args, [args.input])
    csv_path = out / "dfa.csv"
    est.to_csv(csv_path)
    doc = est.report()
    max_lag = min(args.max_lag, len(series.values) - 1)
    acf_path = out / "acf.csv"
    acf = autocorrelation(series, max_lag)
    with open(acf_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("lag,C\n")
        for lag, c in enumerate(acf):
            fh.write(f"{lag},{float(c)!r}\n")
    doc["manifest"] = manifest
    json_path = out / "dfa.json"
    _write_json(json_path, doc)
    _finish(out, manifest, [csv_path, acf_path, json_path])
    return EXIT_OK


def cmd_fit(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fit_range = _parse_range(args.range)
    if args.kind in ("exp", "powerlaw") and fit_range is None:
        raise UsageError(f"fit --kind {args.kind} requires --range lo:hi")
    manifest = _manifest(args, [args.input])
    if args.kind == "exp":
        shape = AveragedShape.from_csv(args.input)
        doc = ExponentialTailFit((int(fit_range[0]), int(fit_range[1]))).fit(shape).report()
    elif args.kind == "powerlaw":
        series = VolumeSeries.from_csv(args.input)
        pdf = empirical_log_pdf(series, bins=_bins(args.bins))
        doc = PowerLawTailFit(fit_range).fit(pdf).report()
    else:
        doc = LognormalFit().fit(VolumeSeries.from_csv(args.input)).report()
    doc["kind"] = args.kind
    doc["manifest"] = manifest
    json_path = out / f"fit_{args.kind}.json"
    _write_json(json_path, doc)
    _finish(out, manifest, [json_path])
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lobshape", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lobshape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, events=True):
        if events:
            p.add_argument("--config", help="session config file (key = value)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1)
        return p

    p = common(sub.add_parser("gen", help="generate a synthetic order-flow stream"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--events", type=int, default=10_000)
    p.add_argument("--mix", default="0.4,0.4,0.2", help="buy,sell,cancel proportions")
    p.add_argument("--placement", choices=["exponential", "uniform"], default="exponential")
    p.add_argument("--rate", type=float, default=0.044, help="exponential placement rate per tick")
    p.add_argument("--placement-depth", type=int)
    p.add_argument("--size-mu", type=float, default=6.0)
    p.add_argument("--size-sigma", type=float, default=1.0)
    p.add_argument("--invalid-fraction", type=float, default=0.0)
    p.add_argument("--resting-target", type=int)
    p.add_argument("--dt", type=float, default=60.0)
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("build", help="rebuild the book; write snapshots, trades, stream report"))
    p.add_argument("inputs", nargs="+")
    p.add_argument("--depth", type=int)
    p.add_argument("--snapshot-depth", type=int, help="cap on dumped depth")
    p.add_argument("--no-snapshots", action="store_true")
    p.set_defaults(func=cmd_build)

    p = common(sub.add_parser("shape", help="event-time averaged shape, peaks and tail fit"))
    p.add_argument("input")
    p.add_argument("--side", choices=["buy", "sell"], required=True)
    p.add_argument("--depth", type=int)
    p.add_argument("--range", help="tail fit window lo:hi in ticks")
    p.add_argument("--period", type=int, default=5)
    p.add_argument("--threshold", type=float, default=1.1)
    p.set_defaults(func=cmd_shape)

    p = common(sub.add_parser("impact", help="event-averaged virtual price impact"))
    p.add_argument("input")
    p.add_argument("--side", choices=["buy", "sell"], required=True, help="side of the virtual market order")
    p.add_argument("--omega", required=True, help="comma-separated order sizes")
    p.set_defaults(func=cmd_impact)

    p = common(sub.add_parser("volumes", help="clock-interval averaged volume at one depth"))
    p.add_argument("input")
    p.add_argument("--side", choices=["buy", "sell"], required=True)
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--dt", type=float, default=60.0)
    p.add_argument("--bins")
    p.set_defaults(func=cmd_volumes)

    p = common(sub.add_parser("dfa", help="DFA and autocorrelation of a volume series"), events=False)
    p.add_argument("input", help="series CSV (interval_index,value)")
    p.add_argument("--range", help="box-size window lo:hi for the Hurst fit")
    p.add_argument("--min-box", type=int, default=8)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--max-lag", type=int, default=100)
    p.set_defaults(func=cmd_dfa)

    p = common(sub.add_parser("fit", help="exponential, power-law tail or lognormal fit"), events=False)
    p.add_argument("input")
    p.add_argument("--kind", choices=["exp", "powerlaw", "lognormal"], required=True)
    p.add_argument("--range", help="exp: ticks lo:hi; powerlaw: log10 v lo:hi")
    p.add_argument("--bins")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lobshape: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"lobshape: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (StreamCorrupt, BookError, ValueError, OSError) as exc:
        print(f"lobshape: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
