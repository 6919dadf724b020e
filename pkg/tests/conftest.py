import numpy as np
import pytest

from ecglab import synth
from ecglab.waveform import Recording

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {text}")


def make_recording(visit_id="csnA", start=0, seconds=10.0, rate=500, gain=0.001, raw=None):
    if raw is None:
        raw = np.arange(int(round(seconds * rate))) % 200 - 100
    return Recording(visit_id, int(start), rate, gain, np.asarray(raw, dtype=np.int16))


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    cfg = synth.SynthConfig(n_visits=40, events_per_visit=2, recordings_per_visit=3, seed=11)
    out = tmp_path_factory.mktemp("cohort")
    return cfg, synth.generate_cohort(cfg, out)
