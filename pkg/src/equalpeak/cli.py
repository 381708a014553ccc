"""
Command line front end.

``equalpeak run <config>``
    initial tuning, norm homotopy, reports and figures
``equalpeak sweep <config>``
    FRF of the uncontrolled host (and of the initial design, if any)
``equalpeak robust <config> --params <report>``
    fixed design re-evaluated on the perturbed hosts of the robustness block

Exit codes: 0 success, 2 invalid input, 3 optimization not converged,
4 numerical failure. A config path that does not exist is looked up among
the bundled scenarios (``two_dof.cfg``, ``plate3.cfg``, ...).
"""

import argparse
from importlib import resources
import logging
from pathlib import Path
import sys

from .config import load_config
from .errors import ConfigError, EqualPeakError, UnsupportedParameterError
from .runner import (EXIT_FAILURE, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, load_params,
                     robustness_sweep, run_scenario, sweep_scenario)

log = logging.getLogger("equalpeak")


def bundled_scenarios():
    """Names of the scenario files shipped with the package."""
    root = resources.files("equalpeak") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_config(path):
    p = Path(path)
    if p.exists():
        return p
    candidate = resources.files("equalpeak") / "scenarios" / p.name
    if candidate.is_file():
        return Path(str(candidate))
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="equalpeak",
        description="All-equal-peak tuning of multiple tuned mass dampers.")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging verbosity (default INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario JSON file or bundled scenario name")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default: ./<scenario name>)")
        p.add_argument("--seedless", action="store_true",
                       help="reserved; the computation uses no random numbers")
        p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
        p.add_argument("--log-level", default=argparse.SUPPRESS,
                       choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    common(sub.add_parser("run", help="optimize the absorbers of a scenario"))
    common(sub.add_parser("sweep", help="frequency response only"))
    rob = sub.add_parser("robust", help="robustness of an optimized design")
    common(rob)
    rob.add_argument("--params", required=True, help="params.json written by 'run'")
    sub.add_parser("list", help="list the bundled scenarios")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    try:
        config = load_config(resolve_config(args.config))
        out_dir = Path(args.out_dir) if args.out_dir else Path(config.name)
        figures = False if args.no_figures else None
        if args.command == "run":
            outcome = run_scenario(config, out_dir, figures)
        elif args.command == "sweep":
            outcome = sweep_scenario(config, out_dir, figures)
        else:
            absorbers, report = load_params(args.params, config)
            omegas = [p["omega"] for p in report.get("peaks", [])]
            if not omegas:
                raise ConfigError([f"{args.params}: report lists no peaks"])
            outcome = robustness_sweep(config, absorbers, omegas, out_dir, figures)
    except (ConfigError, UnsupportedParameterError) as exc:
        print(f"equalpeak: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EqualPeakError as exc:
        print(f"equalpeak: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc, ValueError) else EXIT_FAILURE
    for f in outcome.files:
        log.info("wrote %s", f)
    if outcome.exit_code == EXIT_NOT_CONVERGED:
        log.warning("optimization did not converge; best design written")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
