import math

import pytest
from hypothesis import settings

from errorlaw.oscillator import OscillatorModel, build_scheme

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# Every catalogue scheme exercised by the suite: (family, params).
CATALOG_SCHEMES = [
    ("beta", {"beta": 0.0}),
    ("beta", {"beta": 0.25}),
    ("beta", {"beta": 0.5}),
    ("beta", {"beta": 0.75}),
    ("beta", {"beta": 1.0}),
    ("beta", {"beta": 0.5 - math.sqrt(6) / 6}),
    ("beta", {"beta": 0.5 + math.sqrt(6) / 6}),
    ("theta", {"theta": 0.0}),
    ("theta", {"theta": 0.25}),
    ("theta", {"theta": 1.0}),
    ("exponential", {}),
    ("integral", {}),
    ("optimal", {}),
    ("half_h", {}),
    ("pc_em_bem", {}),
]


def scheme_id(fp):
    family, params = fp
    return family + "".join(f"-{k}={v:.4g}" for k, v in params.items())


@pytest.fixture
def make():
    """``make(family, params, T, N, **model)`` -> (model, scheme)."""

    def _make(family, params, T, N, alpha=1.0, x0=1.0, y0=0.0):
        return OscillatorModel(alpha=alpha, x0=x0, y0=y0, T=T), build_scheme(family, params, N=N, T=T)

    return _make


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
