#!/usr/bin/env python3
"""
planefold - Main Entry Point

Principal foliations of plane fields in 3-space: pointwise curvatures,
principal line tracing, principal cycles and the derivative of their
return map, and small perturbations that make a cycle hyperbolic.

Usage:
    python main.py --cmd analyze -f "(x, y, z)" --seed 2,0,0
    python main.py --cmd cycle -f builtin:example --params "lambda=0.1,a=0.2,eps=0.5" --seed 1.05,0,0
    python main.py --cmd sweep --params "lambda=0.1|0.2|0.3,a=0.1|0.2,eps=0.5"

Exit codes:
    0 success, 1 missing dependencies, 2 input error,
    3 numeric failure, 4 hyperbolization search exhausted

Requirements:
    - Python 3.8+
    - See requirements.txt for dependencies
"""

import argparse
import os
import sys
from typing import List, Optional


def check_dependencies():
    """Check that all required dependencies are available."""
    missing = []

    try:
        import numpy
    except ImportError:
        missing.append("numpy")

    try:
        import scipy
    except ImportError:
        missing.append("scipy")

    try:
        import psutil
    except ImportError:
        missing.append("psutil")

    return missing


def setup_environment():
    """Set up the application environment."""
    app_dir = os.path.dirname(os.path.abspath(__file__))
    if app_dir not in sys.path:
        sys.path.insert(0, app_dir)


def build_parser() -> argparse.ArgumentParser:
    """Command-line flags; unset flags stay None so --config values survive."""
    parser = argparse.ArgumentParser(
        prog="planefold",
        description="Principal foliations, principal cycles and hyperbolicity of plane fields.",
    )
    parser.add_argument("--cmd", choices=["analyze", "trace", "cycle", "hyperbolize", "sweep"],
                        help="command to run (default: analyze)")
    parser.add_argument("-f", "--field",
                        help="field file, builtin:NAME, or inline text such as '(-y, x, 1)'")
    parser.add_argument("--seed", action="append", metavar="X,Y,Z",
                        help="seed point (repeatable)")
    parser.add_argument("--foliation", type=int, choices=[1, 2], help="principal foliation")
    parser.add_argument("--step", type=float, help="RK4 step")
    parser.add_argument("--tol", type=float, help="cycle return tolerance")
    parser.add_argument("--arc", type=float, help="trace arc-length budget")
    parser.add_argument("--heading", metavar="X,Y,Z", help="preferred initial sense of traversal")
    parser.add_argument("--depth", type=int, help="bracket depth for the controllability test")
    parser.add_argument("--budget", type=float, help="largest perturbation epsilon")
    parser.add_argument("--fd-step", dest="fd_step", type=float, help="finite-difference oracle offset")
    parser.add_argument("--params", help="name=value pairs; '|' separates sweep alternatives")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="saved run configuration (JSON); flags override it")
    parser.add_argument("--log-file", dest="log_file", help="also log to this file at DEBUG")
    parser.add_argument("-v", "--verbose", action="store_true", help="show debug messages")
    return parser


def config_from_args(args: argparse.Namespace):
    """Merge a saved configuration with the command-line flags."""
    from cli.run_config import RunConfig, parse_params, parse_vector, split_params

    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.cmd is not None:
        config.command = args.cmd
    for name in ("field", "foliation", "step", "tol", "arc", "depth", "budget", "fd_step", "out", "log_file"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    if args.verbose:
        config.verbose = True
    if args.seed:
        config.seeds = [parse_vector(s) for s in args.seed]
    if args.heading:
        config.heading = parse_vector(args.heading)
    if args.params is not None:
        grid = parse_params(args.params)
        if config.command == "sweep":
            config.sweep_params = {k: v for k, v in grid.items() if len(v) > 1}
            config.params = {k: v[0] for k, v in grid.items() if len(v) == 1}
        else:
            config.params = split_params(grid)
    return config


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    missing = check_dependencies()
    if missing:
        print("ERROR: Missing required dependencies:")
        for dep in missing:
            print(f"  - {dep}")
        print("\nInstall them with:")
        print(f"  pip install {' '.join(missing)}")
        return 1

    setup_environment()

    # Import after environment setup
    from cli.commands import run_command
    from core.errors import PlanefoldError
    from utils.logger import get_logger
    from pathlib import Path

    args = build_parser().parse_args(argv)
    logger = get_logger()
    try:
        config = config_from_args(args)
        logger.set_verbose(config.verbose)
        if config.log_file:
            logger.set_file_log(Path(config.log_file))
        logger.info("CLI", f"planefold {config.command} started")
        run_command(config)
    except PlanefoldError as e:
        logger.error(getattr(e, "source", "App"), f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("CLI", "interrupted")
        return 130

    logger.success("CLI", f"{config.command} finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())
