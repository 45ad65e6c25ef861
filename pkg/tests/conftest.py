"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from cgolab.corpus import load_corpus
from cgolab.materials import derive

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    key = (number, item.name)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            status = "XFAIL" if report.skipped else "XPASS"
        else:
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE[key] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (number, name), (title, status, detail) in sorted(_ACCEPTANCE.items()):
        line = f"criterion {number:>2} {status:<5} {title}"
        if detail:
            line += f"  [{detail}]"
        tr.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def suite_derived(corpus):
    return {name: derive(corpus.build(name)) for name in corpus.suite}


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
