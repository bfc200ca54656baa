"""Command-line entry point ``qbopt``.

Exit codes: 0 success, 2 configuration or output-path error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from qbopt.harness.config import ConfigError, ScenarioConfig, dump_config, load_config
from qbopt.harness.export import KINDS, export_figure_data
from qbopt.harness.presets import get_preset, list_presets
from qbopt.harness.runner import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SYSTEM_CHOICES = ("bose-hubbard", "rydberg-1d", "rydberg-2d", "rydberg-3d")


def _scenario(args) -> ScenarioConfig:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    cfg = load_config(args.config) if args.config else get_preset(args.preset)
    return cfg.with_overrides(seed=args.seed, workers=args.workers, output_dir=args.out)


def _theta(text):
    if text is None:
        return None
    try:
        vals = json.loads(text)
    except json.JSONDecodeError:
        vals = [float(v) for v in text.split(",")]
    return [float(v) for v in vals]


def _cmd_optimize(args):
    cfg = _scenario(args).with_overrides(repeats=1)
    res = run_scenario(cfg)
    rep = res.runs[0].report
    print(f"best FoM {rep['best_fom']:.6g} after {len(res.runs[0].trace)} evaluations; output in {res.out_dir}")


def _cmd_benchmark(args):
    cfg = _scenario(args)
    res = run_scenario(cfg)
    s = res.summary
    print(f"{cfg.repeats} runs; final infidelity median {s.median[-1]:.6g} "
          f"[q1 {s.q1[-1]:.6g}, q3 {s.q3[-1]:.6g}]; output in {res.out_dir}")


def _cmd_spectrum(args):
    for p in export_figure_data("spectrum", args.out, args.system, points=args.points):
        print(p)


def _cmd_export(args):
    for p in export_figure_data(args.kind, args.out, args.system, theta=_theta(args.theta), points=args.points,
                                samples=args.samples, time_factor=args.time_factor):
        print(p)


def _cmd_presets(args):
    if args.show:
        sys.stdout.write(dump_config(get_preset(args.show)))
        return
    for name, note in list_presets():
        print(f"{name:26s} {note}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbopt", description="Bayesian optimal control benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", help="scenario YAML file")
        p.add_argument("--preset", help="named preset instead of a config file")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("optimize", help="single optimization run")
    scenario_flags(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("benchmark", help="repeated runs with median/quartile summary")
    scenario_flags(p)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("spectrum", help="export a spectrum CSV")
    p.add_argument("--system", choices=SYSTEM_CHOICES, default="bose-hubbard")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out", default="spectrum")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("export", help="export figure data files")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--system", choices=SYSTEM_CHOICES, default="bose-hubbard")
    p.add_argument("--theta", help="control vector as JSON list or comma-separated values")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--samples", type=int, default=41)
    p.add_argument("--time-factor", type=float, default=1.0, help="protocol time in units of T_QSL")
    p.add_argument("--out", default="export")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("presets", help="list presets or print one as YAML")
    p.add_argument("--show", metavar="NAME")
    p.set_defaults(func=_cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
