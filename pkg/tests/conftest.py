import os
from datetime import date, datetime, timedelta

import pytest

from cmlrec.cli import main
from cmlrec.data import Transaction
from cmlrec.text import RawMovie

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = []

SMALL = [
    "synth.n_movies=40",
    "synth.n_customers=300",
    "synth.base_rate=0.1",
    "embedding.epochs=2",
    "metric.epochs=2",
]


def movie(mid, day, plot="", metadata=()):
    return RawMovie(mid, mid.upper(), date(2020, 1, 1) + timedelta(days=day), plot, tuple(metadata))


def tx(cust, mid, day, hour=12):
    return Transaction(cust, mid, datetime(2020, 1, 1, hour) + timedelta(days=day))


def run_cli(args, artifacts, extra=()):
    argv = list(args) + ["--artifacts", str(artifacts)]
    for item in list(SMALL) + list(extra):
        argv += ["--set", item]
    return main(argv)


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """A complete pipeline run at toy scale, shared by the CLI tests (read-only)."""
    root = tmp_path_factory.mktemp("small")
    assert run_cli(["run"], root) == 0
    return root


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
