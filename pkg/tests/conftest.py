import numpy as np
import pytest

from repforge.dataio import SetId
from repforge.dsp import align_set
from repforge.synth import SynthSpec, generate_set

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    n, text = m.args
    if call.when == "setup" and call.excinfo is not None:
        skipped = call.excinfo.errisinstance(pytest.skip.Exception)
        _criteria[n] = ("SKIP" if skipped else "FAIL", text)
    elif call.when == "call":
        _criteria[n] = ("PASS" if call.excinfo is None else
                        "SKIP" if call.excinfo.errisinstance(pytest.skip.Exception) else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status:4s}  {text}")


@pytest.fixture(scope="session")
def clean_set():
    spec = SynthSpec(n_reps=8, seed=3, set_id=SetId("A321", 15, 9))
    raw, truth = generate_set(spec)
    return raw, truth, align_set(raw)


@pytest.fixture(scope="session")
def small_rows():
    """Featurized reps from a small mixed-noise synthetic corpus."""
    from repforge.pipeline import extract_rows
    from repforge.synth import generate_corpus
    corpus = generate_corpus(16, seed=21)
    rows, rejects = extract_rows([raw for raw, _ in corpus])
    assert not rejects
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
