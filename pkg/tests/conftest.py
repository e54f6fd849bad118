import numpy as np
import pytest

from riskstrat.explain import make_background
from riskstrat.ingest import encode, impute_missing
from riskstrat.model import train
from riskstrat.synth import default_replica, generate_cohort

REPLICA_SEED = 7

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "tests": 0})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {e['title']} ({e['tests']} test(s))")


@pytest.fixture(scope="session")
def replica():
    from dataclasses import replace

    return generate_cohort(replace(default_replica(), seed=REPLICA_SEED))


@pytest.fixture(scope="session")
def replica_fit(replica):
    """(imputed cohort, design matrix, model, background) for the seed-7 replica."""
    cohort = impute_missing(replica.cohort)
    matrix = encode(cohort)
    model = train(matrix)
    return cohort, matrix, model, make_background(cohort, 128, REPLICA_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class StubModel:
    """Model-interface stub on raw inputs: ``f`` maps an (k, M) array to k outputs."""

    def __init__(self, names, f):
        self.feature_names = tuple(names)
        self._f = f

    def predict_raw(self, raw):
        return np.asarray(self._f(np.atleast_2d(np.asarray(raw, dtype=np.float64))), dtype=np.float64)


@pytest.fixture
def stub():
    return StubModel
