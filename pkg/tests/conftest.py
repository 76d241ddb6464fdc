from __future__ import annotations

import os

import pytest
from hypothesis import settings

from ezsdu.closed_form import optimal_strategy
from ezsdu.params import derive_market, derive_preferences

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BASELINE = dict(R=2.0, S=1.5, r=0.02, mu=0.05, sigma=0.2)
R_BELOW = dict(R=0.5, S=0.75, r=-0.05, mu=-0.04, sigma=0.2)


def model(p):
    prefs = derive_preferences(p["R"], p["S"])
    market = derive_market(p["r"], p["mu"], p["sigma"], prefs)
    return prefs, market, optimal_strategy(market, prefs)


@pytest.fixture
def baseline():
    return model(BASELINE)


@pytest.fixture
def r_below():
    return model(R_BELOW)


@pytest.fixture(params=["baseline", "r_below"])
def any_set(request):
    return model(BASELINE if request.param == "baseline" else R_BELOW)


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
