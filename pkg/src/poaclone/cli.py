"""Command-line entry point: sweep, replay, region and validate."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, plot
from .config import RegionConfig, ScenarioConfig, SweepConfig, load
from .errors import ConfigError
from .runner import execute
from .sweep import CHECK_COLUMNS, region_check, run_sweep, to_csv, write_sweep

OUT_ENV = "POACLONE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("poaclone")


def out_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_ENV, "out"))


def _region_outputs(n: int, sync: analysis.Sync, dest: Path, name: str) -> list[Path]:
    points = analysis.safe_live_region(n, sync)
    text = to_csv(analysis.region_rows(points), ["n", "t", "V", "sync", "safe", "live"])
    dest.mkdir(parents=True, exist_ok=True)
    csv_path = dest / f"{name}.csv"
    svg_path = dest / f"{name}.svg"
    csv_path.write_text(text)
    svg_path.write_text(plot.region_heatmap(text, title=f"n={n}, {sync.value}"))
    for t in range(n + 1):
        quorums = sorted(analysis.safe_and_live_quorums(n, t, sync))
        print(f"t={t}: safe and live V = {quorums if quorums else 'none'}")
    return [csv_path, svg_path]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load(args.config)
    dest = out_dir(args.out)
    if isinstance(cfg, RegionConfig):
        paths = _region_outputs(cfg.n, analysis.Sync(cfg.sync), dest, cfg.name)
        runs = args.runs if args.runs is not None else cfg.check_runs
        if runs:
            seed = args.seed if args.seed is not None else cfg.seed
            rows = region_check(cfg.n, runs, seed)
            check_path = dest / f"{cfg.name}.check.csv"
            check_path.write_text(to_csv(rows, CHECK_COLUMNS))
            paths.append(check_path)
            for r in rows:
                print(f"t={r['t']} V={r['V']} safe={r['safe']} double_spends={r['double_spends']}/{r['runs']}")
    elif isinstance(cfg, SweepConfig):
        result = run_sweep(cfg, runs=args.runs, seed=args.seed, workers=args.workers)
        runs_path, agg_path = write_sweep(result, dest)
        paths = [runs_path, agg_path]
        agg_text = agg_path.read_text()
        keys = result.grid_keys
        x = keys[-1]
        series = keys[0] if len(keys) > 1 else None
        charts = ["success_rate"]
        if cfg.base.protocol.value == "clique":
            charts += ["mean_victim_sealed", "mean_attacker_weight_gain", "mean_victim_weight_gain"]
        if not args.no_plot:
            for y in charts:
                svg = dest / f"{result.name}.{y}.svg"
                svg.write_text(plot.line_chart(agg_text, x, y, series, title=f"{result.name}: {y}"))
                paths.append(svg)
        for row in result.aggregate():
            point = " ".join(f"{k}={row[k]}" for k in keys)
            print(f"{point} success_rate={row['success_rate']:.2f} +/-{row['ci_half_width']:.2f}")
    else:
        raise ConfigError("sweep needs a config with kind: sweep or kind: region")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = load(args.scenario)
    if not isinstance(cfg, ScenarioConfig):
        raise ConfigError("replay needs a single-run scenario (kind: scenario)")
    seed = args.seed if args.seed is not None else cfg.seed
    result = execute(cfg, seed, trace=args.trace)
    dest = out_dir(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.name}.seed{seed}"
    views_path = dest / f"{stem}.views.txt"
    views_path.write_text(result.dump())
    o = result.outcome
    print(f"scenario={cfg.name} seed={seed}")
    print(f"double_spend={int(o.double_spend)} tx1_committed={int(o.tx1_committed_in_partition)} "
          f"attacker_adopted={int(o.attacker_branch_adopted)} tx1_final={int(o.tx1_in_final_chain)}")
    print(f"blocks victim={o.blocks_per_branch[0]} attacker={o.blocks_per_branch[1]} "
          f"weight_gain victim={o.weight_gain_per_branch[0]} attacker={o.weight_gain_per_branch[1]}")
    print(f"tx2_committed={int(o.tx2_committed_in_partition)} tx1_decided_final={int(o.tx1_decided_final)} "
          f"converged={int(o.converged)} final_head={o.final_head}")
    print(f"wrote {views_path}")
    if args.trace:
        trace_path = dest / f"{stem}.trace"
        trace_path.write_text("\n".join(result.sim.trace) + "\n")
        print(f"wrote {trace_path}")
    return EXIT_OK


def cmd_region(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ConfigError("invalid arguments", ["--n: must be >= 1"])
    sync = analysis.Sync.SYNCHRONOUS if args.sync else analysis.Sync.PARTIAL
    paths = _region_outputs(args.n, sync, out_dir(args.out), f"region-n{args.n}-{sync.value}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = load(args.config)
    if isinstance(cfg, SweepConfig):
        print(f"ok: sweep {cfg.name}, {cfg.n_points} points x {cfg.base.runs} runs")
    elif isinstance(cfg, RegionConfig):
        print(f"ok: region {cfg.name}, n={cfg.n}, {cfg.sync}")
    else:
        print(f"ok: scenario {cfg.name}, {cfg.protocol.value}, n={cfg.n}, attack={cfg.attack.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poaclone", description="Cloning-attack simulator for Aura and Clique.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")

    p = sub.add_parser("sweep", help="run a sweep or region config")
    p.add_argument("config", help="config file or preset name")
    p.add_argument("--runs", type=int, help="override runs per point")
    p.add_argument("--seed", type=int, help="override the sweep seed")
    p.add_argument("--workers", type=int, help="worker processes (default: cpu count, max 8)")
    p.add_argument("--no-plot", action="store_true", help="skip SVG output")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="run one scenario and dump final views")
    p.add_argument("scenario", help="scenario file or preset name")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", action="store_true", help="also write the event trace")
    common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("region", help="safe/live classification grid")
    p.add_argument("--n", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sync", action="store_true", help="synchronous model")
    g.add_argument("--partial", action="store_true", help="partially synchronous model (default)")
    common(p)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "runs", None) is not None and args.runs < 1:
        print("config error: --runs: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for problem in exc.problems:
            if problem != str(exc):
                print(f"  {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
