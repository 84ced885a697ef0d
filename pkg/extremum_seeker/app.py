"""Command-line front end.

Every subcommand prints stable ``key=value`` lines so scripts can parse the
results. Exit codes: 0 success, 1 failed verification, 2 bad scenario or
arguments, 3 divergence.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import ScenarioConfig, apply_overrides, load_scenario, validate, write_config_file
from .errors import ConfigError, ValidationError
from .scenarios import ScenarioRun, preset_cart, preset_example1, run_scenario
from .sweep import run_sweep
from .verify import AcceptanceSuite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3

PRESETS = {
    "example1": lambda: preset_example1(4.0),
    "cart": lambda: preset_cart(False),
    "cart-moving": lambda: preset_cart(True),
}


def _with_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if getattr(args, "z0", None) is not None:
        overrides.append(f"init.z0={args.z0!r}")
    if args.seed is not None:
        overrides.append(f"noise.seed={args.seed}")
    return apply_overrides(config, overrides) if overrides else config


def _report_run(run: ScenarioRun) -> int:
    m = run.metrics
    entry = "none" if m.first_entry_time is None else repr(m.first_entry_time)
    print(f"status={run.status}")
    print(f"samples={len(run.trace)}")
    print(f"final_z={float(run.trace.z[-1])!r}")
    print(f"final_y={float(run.trace.y[-1])!r}")
    print(f"first_entry_time={entry}")
    print(f"oscillation_amplitude={m.oscillation_amplitude!r}")
    print(f"residual_band={m.residual_band!r}")
    print(f"switch_count={m.switch_count}")
    print(f"max_abs_error={m.max_abs_error!r}")
    if run.csv_path is not None:
        print(f"csv={run.csv_path}")
        print(f"metadata={run.metadata_path}")
    return EXIT_OK if run.status == "completed" else EXIT_DIVERGED


def _execute(config: ScenarioConfig, out_dir: Path) -> int:
    """Validate, save the exact scenario, run it and print the result lines."""
    violations = validate(config)
    if violations:
        raise ValidationError(violations)
    write_config_file(config, out_dir / "scenario.toml")
    return _report_run(run_scenario(config, out_dir))


def cmd_run(args) -> int:
    """Run a scenario file."""
    config = _with_overrides(load_scenario(args.config), args)
    return _execute(config, Path(args.out))


def cmd_example1(args) -> int:
    """Run the two-bump Example 1 preset."""
    config = _with_overrides(preset_example1(args.z0 if args.z0 is not None else 4.0), args)
    return _execute(config, Path(args.out))


def cmd_cart(args) -> int:
    """Run the light-seeking cart preset."""
    config = _with_overrides(preset_cart(args.moving), args)
    return _execute(config, Path(args.out))


def cmd_sweep(args) -> int:
    """Sweep one parameter over a comma-separated value list."""
    if args.config:
        config = load_scenario(args.config)
    else:
        config = PRESETS[args.preset]()
    config = _with_overrides(config, args)
    values = [v.strip() for v in (args.values or "").split(",") if v.strip()]
    if not values:
        print("error=empty value list")
        return EXIT_INVALID
    results = run_sweep(config, args.param, values, Path(args.out), workers=args.workers)
    for result in results:
        row = result.summary_row()
        print(f"value={row[0]} status={row[1]} first_entry_time={row[2] or 'none'} "
              f"oscillation_amplitude={row[3]} switch_count={row[4]}")
    print(f"summary={Path(args.out) / 'summary.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    """Run the acceptance suite; exit 1 when any criterion fails."""
    results = AcceptanceSuite(Path(args.out), break_monitoring=args.inject_fault).run()
    for result in results:
        print(result.line())
    passed = all(r.passed for r in results)
    print(f"verify={'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extremum-seeker",
        description="Extremum seeking control with monitoring functions",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, z0: bool = False):
        p.add_argument("--out", default="runs", help="Output directory for artifacts")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="Override a scenario key, e.g. controller.r=0.05 (repeatable)")
        p.add_argument("--seed", type=int, help="Measurement-noise seed")
        if z0:
            p.add_argument("--z0", type=float, help="Initial output coordinate z(0)")

    p = sub.add_parser("run", help="Run a scenario file")
    p.add_argument("--config", required=True, help="Scenario TOML file")
    common(p, z0=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("example1", help="Run the two-bump relative-degree-one example")
    common(p, z0=True)
    p.set_defaults(func=cmd_example1)

    p = sub.add_parser("cart", help="Run the light-seeking servo cart")
    p.add_argument("--moving", action="store_true", help="Use the moving-source schedule")
    common(p)
    p.set_defaults(func=cmd_cart)

    p = sub.add_parser("sweep", help="Run one scenario per parameter value")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Scenario TOML file")
    source.add_argument("--preset", choices=sorted(PRESETS), help="Preset scenario")
    p.add_argument("--param", required=True, help="Dotted key to sweep, e.g. controller.mu")
    p.add_argument("--values", required=True, help="Comma-separated values")
    p.add_argument("--workers", type=int, default=4, help="Concurrent runs")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="Run the acceptance suite")
    p.add_argument("--out", default="runs/verify", help="Output directory for artifacts")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as err:
        for violation in err.violations:
            print(f"violation={violation}")
        return EXIT_INVALID
    except (ConfigError, FileNotFoundError) as err:
        print(f"error={err}".splitlines()[0])
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
