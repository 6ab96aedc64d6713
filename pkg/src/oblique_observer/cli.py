"""``observer`` command line: run, sweep, constants, ode-check."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_sensor_spec
from .errors import AssumptionViolation

EXIT_OK = 0
EXIT_UNSTABLE = 1
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sensor_list(text: str):
    try:
        return [parse_sensor_spec(s.strip()) for s in text.split(",") if s.strip()]
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="observer", description="Output-injection observer experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one scenario and write its artifacts")
    r.add_argument("config", help="config file, or a preset name")
    r.add_argument("--expect-stable", action="store_true",
                   help="exit with status 1 if the error norm blows up")
    r.add_argument("--out", default=None, help="output directory (default: ./out/<config stem>)")

    s = sub.add_parser("sweep", help="run a grid of (sensors, lambda) pairs")
    s.add_argument("config")
    s.add_argument("--S-list", dest="s_list", type=_sensor_list, required=True,
                   help="comma-separated sensors_S values, e.g. 1,ngrid:3,2")
    s.add_argument("--lambda-list", dest="lambda_list", type=_float_list, required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default=None)

    c = sub.add_parser("constants", help="print the Poincare-like constants as JSON")
    c.add_argument("config")
    c.add_argument("--out", default=None, help="also write constants.json into this directory")

    o = sub.add_parser("ode-check", help="scalar ODE certification suite")
    o.add_argument("--tuples", type=int, default=200)
    o.add_argument("--seed", type=int, default=0)
    return p


def _default_out(config: str, suffix: str = "") -> Path:
    return Path("out") / (Path(config).stem + suffix)


def _cmd_run(args) -> int:
    from .experiments import run

    cfg = load_config(args.config)
    out = Path(args.out) if args.out else _default_out(args.config)
    summary = run(cfg, out)
    d = summary.summary_dict()
    print(json.dumps(d))
    if args.expect_stable and summary.blowup:
        print(f"error norm blew up at t={summary.t_blowup:g}", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .experiments import monotonicity_report, sweep, sweep_table_csv

    cfg = load_config(args.config)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    out = Path(args.out) if args.out else _default_out(args.config, "-sweep")
    rows = sweep(cfg, args.s_list, args.lambda_list, out, jobs=args.jobs)
    sys.stdout.write(sweep_table_csv(rows))
    print(json.dumps(monotonicity_report(rows)), file=sys.stderr)
    return EXIT_OK


def _cmd_constants(args) -> int:
    from .experiments import build_scenario, constants_report

    cfg = load_config(args.config)
    report = constants_report(build_scenario(cfg))
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "constants.json").write_text(text + "\n")
    return EXIT_OK


def _cmd_ode_check(args) -> int:
    from .scalar_ode import certify

    rep = certify(n_tuples=args.tuples, seed=args.seed)
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK if rep.ok else EXIT_UNSTABLE


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "constants": _cmd_constants, "ode-check": _cmd_ode_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"observer: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"observer: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
