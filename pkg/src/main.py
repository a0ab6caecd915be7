#!/usr/bin/env python3
"""
Novikov Lab - Main CLI Entry Point

Simulate the multi-component Novikov system, check peakons against the weak
formulation, run the acceptance suite and export monitor series.
"""

import os
import sys
import argparse
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def main(argv=None) -> int:
    """Main CLI entry point with subcommands."""
    parser = argparse.ArgumentParser(
        description='Novikov Lab - pseudospectral experiments for the multi-component Novikov system',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Smooth Geng-Xue run with conserved-quantity monitors
  python src/main.py simulate config/gx_smooth.conf

  # Exact peakon against the weak formulation
  python src/main.py peakon-check config/peakon_line.conf

  # Acceptance suite (reduced sizes)
  python src/main.py verify --quick

  # Export per-monitor CSV pairs for plotting
  python src/main.py emit-plots results/gx-smooth

Exit codes: 0 completed (including blow-up suspected), 2 config error,
3 numerical failure, 4 I/O failure.
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # --- Simulate Command ---
    simulate_parser = subparsers.add_parser(
        'simulate',
        help='Run a scenario and write monitors, snapshots and a manifest'
    )
    simulate_parser.add_argument('config', help='Scenario file (flat key = value grammar or YAML)')
    simulate_parser.add_argument(
        '--out',
        default=None,
        help='Run directory (default: <output root>/<scenario name>)'
    )
    simulate_parser.add_argument('--verbose', action='store_true', help='Debug logging')

    # --- Peakon Check Command ---
    peakon_parser = subparsers.add_parser(
        'peakon-check',
        help='Weak-form residual of the exact peakon at its predicted speed'
    )
    peakon_parser.add_argument('config', help='Scenario file with kind peakon or periodic_peakon')
    peakon_parser.add_argument('--out', default=None, help='Output directory')

    # --- Verify Command ---
    verify_parser = subparsers.add_parser(
        'verify',
        help='Run the acceptance criteria and write a JSON report'
    )
    verify_parser.add_argument('config', nargs='?', default=None, help='Optional scenario driving the runs')
    verify_parser.add_argument('--quick', action='store_true', help='Reduced problem sizes')
    verify_parser.add_argument(
        '--only',
        nargs='+',
        default=None,
        help='Criterion names to run (default: all)'
    )
    verify_parser.add_argument(
        '--report',
        default='results/verify_report.json',
        help='Report path (default: results/verify_report.json)'
    )

    # --- Emit Plots Command ---
    plots_parser = subparsers.add_parser(
        'emit-plots',
        help='Write one (time, value) CSV per monitor of a finished run'
    )
    plots_parser.add_argument('run_dir', help='Run directory containing monitors.csv')

    # Parse arguments
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    # Execute command
    if args.command == 'simulate':
        return run_simulate(args)
    elif args.command == 'peakon-check':
        return run_peakon_check(args)
    elif args.command == 'verify':
        return run_verify(args)
    elif args.command == 'emit-plots':
        return run_emit_plots(args)
    return 0


def _load(path: str, logger):
    """Load a scenario file, printing every violation on failure."""
    from src.utils.config_loader import load_config
    from src.utils.errors import ConfigError

    try:
        return load_config(path)
    except ConfigError as e:
        logger.error(f"Invalid configuration {path}:")
        for violation in e.violations:
            logger.error(f"  - {violation}")
        print(f"❌ Invalid configuration ({len(e.violations)} problem(s)); see log")
        return None


def run_simulate(args) -> int:
    """Run one scenario."""
    print("🌊 Running simulation...")
    import logging
    from dotenv import load_dotenv
    from src.cli_io import EXIT_CONFIG, run_scenario
    from src.utils.logger import setup_logger

    load_dotenv()
    logger = setup_logger("simulate", level=logging.DEBUG if args.verbose else logging.INFO)

    config = _load(args.config, logger)
    if config is None:
        return EXIT_CONFIG

    outcome = run_scenario(config, Path(args.out) if args.out else None,
                           base_dir=Path(args.config).parent, logger=logger)

    if outcome.exit_code == 0:
        if outcome.termination == "blowup_suspected":
            print(f"⚠️  Blow-up suspected; flags: {sorted(outcome.flags)}")
        print(f"✅ Simulation complete ({outcome.termination}). Artifacts in {outcome.run_dir}/")
    else:
        print(f"❌ Simulation failed ({outcome.termination}, exit {outcome.exit_code})")
    return outcome.exit_code


def run_peakon_check(args) -> int:
    """Check the exact peakon against the weak formulation."""
    print("⛰️  Checking peakon weak form...")
    from dotenv import load_dotenv
    from src.cli_io import EXIT_CONFIG, EXIT_IO, peakon_check
    from src.utils.errors import ArtifactIOError, ConfigError
    from src.utils.logger import setup_logger

    load_dotenv()
    logger = setup_logger("peakon-check")

    config = _load(args.config, logger)
    if config is None:
        return EXIT_CONFIG

    try:
        report = peakon_check(config, Path(args.out) if args.out else None, logger=logger)
    except ConfigError as e:
        logger.error(str(e))
        print(f"❌ {e}")
        return EXIT_CONFIG
    except ArtifactIOError as e:
        logger.error(str(e))
        print(f"❌ {e}")
        return EXIT_IO

    status = "✅" if report["passed"] else "❌"
    print(f"{status} speed c={report['speed']:.10g}: max residual {report['max_residual']:.3e} "
          f"(tolerance {report['tolerance']:.0e}), perturbed/exact ratio {report['ratio']:.1f}")
    return 0


def run_verify(args) -> int:
    """Run the acceptance suite."""
    print("🔬 Running acceptance criteria...")
    from dotenv import load_dotenv
    from src.cli_io import EXIT_CONFIG, EXIT_IO
    from src.utils.errors import ArtifactIOError
    from src.utils.logger import setup_logger
    from src.verify import verify

    load_dotenv()
    logger = setup_logger("verify")

    config = None
    if args.config:
        config = _load(args.config, logger)
        if config is None:
            return EXIT_CONFIG

    report_path = Path(args.report)
    if os.getenv("NOVIKOV_OUT"):
        report_path = Path(os.getenv("NOVIKOV_OUT")) / report_path.name
    try:
        report = verify(config, quick=args.quick, only=args.only, report_path=report_path, logger=logger)
    except ArtifactIOError as e:
        logger.error(str(e))
        print(f"❌ {e}")
        return EXIT_IO

    icons = {"pass": "✅", "fail": "❌", "not_applicable": "➖"}
    for criterion in report["criteria"]:
        print(f"  {icons[criterion['status']]} {criterion['name']}: {criterion['status']}")
    print(f"{'✅' if report['passed'] else '❌'} Report written to {report_path}")
    return 0


def run_emit_plots(args) -> int:
    """Export per-monitor series of a finished run."""
    print("📊 Exporting monitor series...")
    from src.cli_io import EXIT_IO, emit_plots
    from src.utils.errors import ArtifactIOError
    from src.utils.logger import setup_logger

    logger = setup_logger("emit-plots")
    try:
        written = emit_plots(Path(args.run_dir), logger=logger)
    except ArtifactIOError as e:
        logger.error(str(e))
        print(f"❌ {e}")
        return EXIT_IO

    print(f"✅ Wrote {len(written)} series to {Path(args.run_dir) / 'plots'}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
