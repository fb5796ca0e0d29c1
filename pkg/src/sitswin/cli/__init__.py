"""The `sitswin` command and its verification suites."""

from sitswin.cli.main import COMMANDS, build_parser, main
from sitswin.cli.verify import SUITES, CheckResult, run_suites

__all__ = ["COMMANDS", "build_parser", "main", "SUITES", "CheckResult", "run_suites"]
