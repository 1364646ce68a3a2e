"""Command-line runner: ``uwqkd simulate | sweep | sync-test | analyze``."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, config_from_mapping, load_config
from .decoy import RateCurve, rate_vs_distance
from .pipeline import RoundResult, analyze_round, run_round, summarize
from .receiver import Detections, Detector, Origin, quantize
from .streams import substream
from .sync import UnrecoverableGridError, assign_time_tags, recover_sync_grid
from .transmitter import PS_PER_S

EXIT_CONFIG = 2
EXIT_GRID = 3


def _simulate_one(cfg: ExperimentConfig, round_index: int, export_dir: str | None) -> RoundResult:
    data, result = run_round(cfg, round_index)
    if export_dir is not None:
        out = Path(export_dir)
        io.write_events_csv(out / f"events_round{round_index:04d}.csv", data.events)
        io.write_emissions_csv(out / f"emissions_round{round_index:04d}.csv", data.train, round_index)
    return result


def run_simulate(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                 export_events: bool = False, jobs: int = 1) -> tuple[list[RoundResult], dict]:
    """Simulate and distil ``cfg.rounds`` rounds; write reports.jsonl and summary.json to ``out_dir``."""
    if export_events and out_dir is None:
        raise ConfigError("exporting events needs an output directory")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    export = str(out_dir) if export_events else None
    rounds = range(cfg.rounds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_one, [cfg] * cfg.rounds, rounds, [export] * cfg.rounds))
    else:
        results = [_simulate_one(cfg, i, export) for i in rounds]
    reports = [r.report for r in results]
    summary = summarize(reports, [r.stats for r in results], cfg)
    if out_dir is not None:
        io.write_jsonl(Path(out_dir) / "reports.jsonl", reports)
        io.write_json(Path(out_dir) / "summary.json", summary)
    return results, summary


def run_sweep(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict[str, RateCurve]:
    """Asymptotic rate curve for each configured water type, one CSV per type."""
    sw = cfg.sweep
    if not sw.waters:
        raise ConfigError("sweep grid is empty: no water types given")
    if sw.max_distance_m is not None and sw.max_distance_m < 0:
        raise ConfigError("sweep grid is empty: negative max distance")
    if sw.step_m <= 0:
        raise ConfigError("sweep step must be positive")
    curves = {}
    for name in sw.waters:
        curves[name] = rate_vs_distance(cfg.water_type(name), cfg.system_db, cfg.detector, cfg.source,
                                        sw.step_m, wavelength_nm=cfg.wavelength_nm,
                                        max_distance_m=sw.max_distance_m, q=sw.sifting_factor,
                                        f=cfg.post.ec_efficiency, window_ps=cfg.sync.window_ps,
                                        distances=sw.distances or None)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for name, curve in curves.items():
            io.write_curve_csv(Path(out_dir) / f"curve_{name}.csv", curve)
    return curves


def run_sync_test(cfg: ExperimentConfig, n_signal: int = 100_000, n_noise: int = 100_000) -> dict:
    """Recover a lossy, noisy beacon grid and score the slot tagging that depends on it.

    Raises :class:`UnrecoverableGridError` when too few beacon clicks survive.
    """
    src, det, sc = cfg.source, cfg.detector, cfg.sync
    rng = lambda name: substream(cfg.seed, "sync-test", name)  # noqa: E731
    duration_ps = int(round(cfg.session_s * PS_PER_S))
    n_ticks = -(-duration_ps // src.sync_period_ps)
    truth = np.arange(n_ticks, dtype=np.int64) * src.sync_period_ps

    r = rng("beacon")
    seen = truth[r.random(n_ticks) < sc.detect_prob]
    beacon = quantize(seen + r.normal(0.0, det.jitter_ps, len(seen)), det.tdc_bin_ps)
    noise = quantize(r.integers(0, duration_ps, size=r.poisson(sc.noise_hz * cfg.session_s)), det.tdc_bin_ps)
    grid = recover_sync_grid(np.concatenate([beacon, noise]), src.sync_period_ps, sc.tolerance_ps,
                             span_ps=(0, duration_ps), tdc_bin_ps=det.tdc_bin_ps)
    accepted_noise = grid.accepted[len(beacon):]
    dist = np.abs(noise - np.rint(noise / src.sync_period_ps) * src.sync_period_ps)
    far = dist > sc.tolerance_ps

    n_pulses = duration_ps // src.period_ps
    r = rng("signal")
    idx = np.sort(r.choice(n_pulses, size=min(n_signal, n_pulses), replace=False))
    t_sig = quantize(idx * src.period_ps + r.normal(0.0, det.jitter_ps, len(idx)), det.tdc_bin_ps)
    sig = Detections(np.full(len(idx), Detector.D1), t_sig, np.full(len(idx), Origin.SIGNAL))
    tagged = assign_time_tags(sig, grid, src.period_ps, sc.delta_t_ps, sc.window_ps)
    correct = tagged.valid & (tagged.sequence == idx)

    r = rng("noise")
    t_noise = r.integers(0, duration_ps, size=n_noise)
    nz = Detections(np.full(n_noise, Detector.D1), t_noise, np.full(n_noise, Origin.DARK))
    pass_rate = float(np.mean(assign_time_tags(nz, grid, src.period_ps, sc.delta_t_ps, sc.window_ps).valid))

    return {
        "session_s": cfg.session_s, "detect_prob": sc.detect_prob, "noise_hz": sc.noise_hz,
        "n_ticks": int(n_ticks), "n_beacon_detected": int(len(beacon)), "n_noise": int(len(noise)),
        "grid_exact": bool(np.array_equal(grid.ticks, truth)), "phase_ps": grid.phase_ps,
        "n_accepted": grid.n_accepted, "n_rejected": grid.n_rejected,
        "noise_far_rejected": float(np.mean(~accepted_noise[far])) if far.any() else 1.0,
        "tag_accuracy": float(np.mean(correct)) if len(idx) else 1.0,
        "noise_pass_rate": pass_rate,
        "window_ratio": sc.window_ps / src.period_ps,
    }


def run_analyze(cfg: ExperimentConfig, events_path: str | Path, emissions_path: str | Path,
                out_dir: str | Path | None = None) -> dict:
    """Replay recorded detections through sync, sifting, reconciliation and the decoy analysis."""
    events = io.read_events_csv(events_path)
    train, round_index = io.read_emissions_csv(emissions_path)
    if not np.any(events.detector == Detector.D5):
        raise UnrecoverableGridError(f"{events_path}: no sync (D5) detections")
    result = analyze_round(cfg, round_index, train, events)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        io.write_jsonl(Path(out_dir) / f"analyze_round{round_index:04d}.jsonl", [result.report])
    return result.report


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {"mode": args.command}
    for flag, key in (("seed", "seed"), ("attack", "attack.kind"), ("distance", "distance_m"),
                      ("water", "water"), ("rounds", "rounds")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return config_from_mapping(overrides, cfg)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwqkd", description="Decoy-state BB84 over an underwater channel.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--attack", choices=["none", "intercept", "pns"])
    common.add_argument("--distance", type=float, metavar="M")
    common.add_argument("--water", metavar="NAME")

    s = sub.add_parser("simulate", parents=[common], help="simulate rounds and distil keys")
    s.add_argument("--rounds", type=int)
    s.add_argument("--export-events", action="store_true",
                   help="also write per-round events and emissions CSV files")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (output is unchanged)")
    sub.add_parser("sweep", parents=[common], help="key rate versus distance per water type")
    sub.add_parser("sync-test", parents=[common], help="score beacon-grid recovery and tagging")
    a = sub.add_parser("analyze", parents=[common], help="replay exported events")
    a.add_argument("--events", required=True, metavar="CSV")
    a.add_argument("--emissions", required=True, metavar="CSV")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "simulate":
            _, summary = run_simulate(cfg, args.out, args.export_events, args.jobs)
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "sweep":
            curves = run_sweep(cfg, args.out)
            for name, curve in curves.items():
                print(f"{name}: cutoff {curve.cutoff_m} m, {len(curve.points)} points")
        elif args.command == "sync-test":
            report = run_sync_test(cfg)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                io.write_json(Path(args.out) / "sync_test.json", report)
            print(json.dumps(report, sort_keys=True))
        else:
            print(io.dumps_report(run_analyze(cfg, args.events, args.emissions, args.out)))
    except (ConfigError, io.ParseError, OSError) as exc:
        print(f"uwqkd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnrecoverableGridError as exc:
        print(f"uwqkd: unrecoverable sync grid: {exc}", file=sys.stderr)
        return EXIT_GRID
    return 0


if __name__ == "__main__":
    sys.exit(main())
