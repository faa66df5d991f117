from datetime import datetime

import numpy as np
import pytest

from curvelatent.curves import CurveKind, RawStepCurve
from curvelatent.ingestion import SyntheticConfig, generate_synthetic

T0 = datetime(2019, 6, 1, 14)


def random_curve(rng, kind=None, n_steps=None, timestamp=T0, price_scale=100.0):
    """A valid random step curve: sorted prices over strictly increasing volumes."""
    kind = kind or (CurveKind.SUPPLY if rng.uniform() < 0.5 else CurveKind.DEMAND)
    n = n_steps or int(rng.integers(2, 40))
    volumes = np.cumsum(rng.uniform(10.0, 500.0, size=n))
    prices = np.sort(rng.uniform(-20.0, price_scale * 1.5, size=n))
    if kind is CurveKind.DEMAND:
        prices = prices[::-1]
    return RawStepCurve(timestamp, kind, prices, volumes)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SyntheticConfig(seed=7, n_days=20))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance = {}
_notes = {}


@pytest.fixture
def note(request):
    """Attach a one-line measurement to the acceptance summary of this test."""
    def add(text):
        _notes[request.node.name] = text
        print(text)
    return add


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when in ("setup", "call"):
        name = report.nodeid.split("::")[-1]
        if report.failed or report.when == "call":
            _acceptance.setdefault(name, "PASS" if report.passed else "FAIL")
            if report.failed:
                _acceptance[name] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance):
        detail = f"  ({_notes[name]})" if name in _notes else ""
        terminalreporter.write_line(f"{_acceptance[name]:4s}  {name}{detail}")
