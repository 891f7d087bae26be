"""
Command-line entry point for the unimodal response lab.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np
from dotenv import load_dotenv

from .core.config import load_config
from .core.errors import (EXIT_OK, EXIT_VERIFICATION_FAILED, LinearAlgebraFailure,
                          UnimodalResponseError)
from .core.performance_monitor import PerformanceMonitor
from .core.pipeline import run_pipeline, verify
from .core.report_writer import ReportWriter

logger = logging.getLogger("unimodal_response")

# subcommand -> last pipeline stage it needs
COMMANDS = {
    "partition": "map",
    "atlas": "charts",
    "spectrum": "operators",
    "density": "operators",
    "psi": "susceptibility",
    "poles": "susceptibility",
    "verify": "susceptibility",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unimodal-response",
        description="Susceptibility function of postcritically finite unimodal maps.")
    parser.add_argument("command", choices=sorted(COMMANDS), help="What to compute.")
    parser.add_argument("--config", required=True, help="JSON run configuration.")
    parser.add_argument("--degree", type=int, default=None, help="Nodes per interval (overrides config).")
    parser.add_argument("--output-dir", dest="output_dir", default=None,
                        help="Directory for result files (overrides config).")
    parser.add_argument("--env-file", dest="env_file", default=None, help="Optional .env file.")
    parser.add_argument("--log-level", dest="log_level",
                        default=None,
                        help="Logging level (default: INFO or $UNIMODAL_RESPONSE_LOG_LEVEL).")
    return parser


def setup_logging(level: str):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s")


def _report_failure(exc: UnimodalResponseError) -> int:
    logger.error("%s: %s", type(exc).__name__, exc)
    print(json.dumps(exc.to_dict(), indent=2, default=str), file=sys.stderr)
    return exc.exit_code


def run(argv=None) -> int:
    """Execute one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    if args.env_file:
        load_dotenv(args.env_file)
    else:
        load_dotenv()
    setup_logging(args.log_level or os.getenv("UNIMODAL_RESPONSE_LOG_LEVEL", "INFO"))
    monitor = PerformanceMonitor()
    try:
        config = load_config(args.config, {"degree": args.degree, "output_dir": args.output_dir},
                             env_file=args.env_file)
        writer = ReportWriter(config.output_dir)
        if args.command == "verify":
            bundle = verify(config, monitor)
        else:
            bundle = run_pipeline(config, COMMANDS[args.command], monitor)
        bundle.write(writer)
    except UnimodalResponseError as exc:
        return _report_failure(exc)
    except np.linalg.LinAlgError as exc:
        return _report_failure(LinearAlgebraFailure(f"linear algebra failure: {exc}"))
    finally:
        monitor.log_summary()

    if bundle.verification is not None:
        failed = [c["check"] for c in bundle.verification["checks"] if not c["passed"]]
        print(json.dumps({"passed": not failed, "failed": failed,
                          "n_checks": bundle.verification["n_checks"]}, indent=2))
        return EXIT_VERIFICATION_FAILED if failed else EXIT_OK
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
