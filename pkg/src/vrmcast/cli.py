"""Command line interface: single runs, parameter sweeps, preset listing.

Exit codes: 0 success, 2 configuration/validation error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import plotting, simcore
from .config import (
    PRESETS,
    ConfigError,
    SimConfig,
    parse_config,
    parse_override_value,
    preset,
)

SWEEP_METRICS = (
    "avg_delay_ms",
    "p99_delay_ms",
    "hd_delivery_rate",
    "delivered_jaccard",
)


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key] = parse_override_value(key, raw)
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    if args.seed is not None:
        overrides["seed"] = args.seed
    return overrides


def _load_config(args: argparse.Namespace) -> SimConfig:
    overrides = _collect_overrides(args)
    if args.preset:
        return preset(args.preset, overrides)
    return parse_config(args.config, overrides)


def _write_effective_config(cfg: SimConfig, out_dir: Path) -> None:
    (out_dir / "config.json").write_text(
        json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_effective_config(cfg, out_dir)
    report, rows = simcore.run(cfg)
    frame_csv = out_dir / "frames.csv"
    frame_csv.write_text(
        simcore.CSV_HEADER + "\n" + "".join(r + "\n" for r in rows), encoding="utf-8"
    )
    summary = report.to_dict()
    summary["percentile_method"] = "nearest-rank"
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"{report.scheme} seed={report.seed}: "
        f"avg_delay={report.avg_delay_ms:.3f} ms "
        f"p99={report.p99_delay_ms:.3f} ms "
        f"hd_rate={report.hd_delivery_rate:.4f} "
        f"jaccard={report.delivered_jaccard:.4f}"
    )
    return 0


def _sweep_one(payload: tuple[dict, str, int]) -> dict:
    cfg_dict, scheme, seed = payload
    cfg = SimConfig(**cfg_dict)
    cfg.scheme = scheme
    cfg.seed = seed
    report, _ = simcore.run(cfg)
    return report.to_dict()


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    values = [parse_override_value(args.sweep_param, v) for v in args.values.split(",")]
    schemes = args.schemes.split(",") if args.schemes else [cfg.scheme]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_effective_config(cfg, out_dir)

    jobs = []
    for value in values:
        cfg_dict = dataclasses.asdict(cfg)
        cfg_dict[args.sweep_param] = value
        probe = SimConfig(**cfg_dict)
        probe.validate()  # fail fast before fan-out
        for scheme in schemes:
            for seed in seeds:
                jobs.append((cfg_dict, scheme, seed, value))

    results = []
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for (cfg_dict, scheme, seed, value), row in zip(
                jobs, pool.map(_sweep_one, [(c, s, d) for c, s, d, _ in jobs])
            ):
                row[args.sweep_param] = value
                results.append(row)
    else:
        for cfg_dict, scheme, seed, value in jobs:
            row = _sweep_one((cfg_dict, scheme, seed))
            row[args.sweep_param] = value
            results.append(row)

    columns = [args.sweep_param, "scheme", "seed"] + list(SWEEP_METRICS) + [
        "frames_scored",
        "violation_fraction",
    ]
    lines = [",".join(columns)]
    for row in results:
        lines.append(
            ",".join(
                (
                    f"{row[c]:.6f}"
                    if isinstance(row[c], float)
                    else str(row[c])
                )
                for c in columns
            )
        )
    table = out_dir / "sweep.csv"
    table.write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    for metric in SWEEP_METRICS:
        plotting.plot_sweep_metric(
            results, args.sweep_param, metric, str(out_dir / f"{metric}.svg")
        )
    print(f"wrote {len(results)} rows to {table}")
    return 0


def cmd_preset_list(_args: argparse.Namespace) -> int:
    for name in sorted(PRESETS):
        spec = PRESETS[name]
        users = spec["num_videos"] * spec["users_per_video"]
        print(
            f"{name}: {spec['rows']}x{spec['cols']} seats, "
            f"{spec['num_videos']} videos, {users} users"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrmcast",
        description="Tiled 360-degree VR multicast streaming simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", help="scenario preset name (see preset-list)")
        p.add_argument("--scheme", choices=["UREAC", "MREAC", "MPROAC", "MPROAC+"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--param",
            action="append",
            metavar="KEY=VALUE",
            help="override one configuration key (repeatable)",
        )

    p_run = sub.add_parser("run", help="simulate one (config, scheme, seed)")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one parameter across schemes and seeds")
    add_common(p_sweep)
    p_sweep.add_argument("sweep_param", help="configuration key to sweep")
    p_sweep.add_argument("values", help="comma-separated values")
    p_sweep.add_argument("--schemes", help="comma-separated scheme list")
    p_sweep.add_argument("--seeds", help="comma-separated seed list")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_list = sub.add_parser("preset-list", help="list scenario presets")
    p_list.set_defaults(func=cmd_preset_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
