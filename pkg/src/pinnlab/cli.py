"""Command line entry point.

Exit codes: 0 success (a recorded blow-up is still a success), 2 config
error, 3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import datasets as ds
from . import harness as hs
from .simulate import ConfigError

EXIT_CONFIG = 2
EXIT_IO = 3


def _overrides(pairs):
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v
    return out


def _config(args):
    ov = _overrides(args.set)
    if args.config:
        return hs.load_config(args.config, ov)
    return hs.parse_config_text("", ov)


def _summary(report):
    return {
        "final_rmse": report.final_rmse,
        "best_rmse": report.best_rmse,
        "best_iteration": report.best_iteration,
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "coefficients": report.final_coefficients,
        "wall_time_s": round(report.wall_time, 3),
    }


def cmd_run(args):
    cfg = _config(args)
    report = hs.run_experiment(cfg, out_dir=args.out, figures=not args.no_figures)
    print(json.dumps(_summary(report), indent=2))


def cmd_sweep(args):
    cfg = _config(args)
    values = [v for v in args.values.split(",") if v.strip()]
    result = hs.run_sweep(
        cfg, args.axis, values, args.repeats, workers=args.workers,
        out_dir=args.out, figures=not args.no_figures,
    )
    for row in result.table():
        print(json.dumps(row))


def cmd_gen_data(args):
    cfg = _config(args)
    out = Path(args.out)
    if args.system in ("pendulum", "pendulum-ideal"):
        source, _ = hs.load_source(replace(cfg, system="pendulum-ideal"))
        ds.write_pendulum_csv(source, out)
    elif args.system in ("heat", "heat-synthetic"):
        source, _ = hs.load_source(replace(cfg, system="heat-synthetic", frame_size=0, denoise=False))
        ds.write_frames_csv(source, out)
    else:
        raise ConfigError(f"unknown system {args.system!r}; use pendulum or heat")
    print(f"wrote {len(source)} {'samples' if args.system.startswith('pendulum') else 'frames'} to {out}")


def cmd_denoise(args):
    window = ds.odd_window(args.window)
    try:
        config = ds.DenoiseConfig(args.threshold, window, args.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    stack = ds.load_frames_csv(args.inp)
    try:
        clean, rep = ds.denoise(stack, config, args.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds.write_frames_csv(clean, args.out)
    summary = dict(vars(rep))
    if window != args.window:
        summary["note"] = f"window {args.window} adjusted to odd {window}"
    print(json.dumps(summary, indent=2))


def cmd_presets(args):
    for name in sorted(hs.PRESETS):
        print(name)


def build_parser():
    p = argparse.ArgumentParser(prog="pinnlab", description="PINN vs NN training experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    r = sub.add_parser("run", help="train one configuration")
    common(r, "pinnlab-run")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="train over a list of axis values")
    common(s, "pinnlab-sweep")
    s.add_argument("--axis", required=True, choices=sorted(hs.SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen-data", help="write simulator data in the CSV formats")
    g.add_argument("--system", required=True, help="pendulum or heat")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--set", action="append", metavar="KEY=VALUE")
    g.set_defaults(func=cmd_gen_data)

    d = sub.add_parser("denoise", help="spike filter and Savitzky-Golay smoothing of a frame CSV")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--threshold", type=float, default=100.0)
    d.add_argument("--window", type=int, default=401)
    d.add_argument("--order", type=int, default=3)
    d.set_defaults(func=cmd_denoise)

    ps = sub.add_parser("presets", help="list preset names")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ds.ParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
