import numpy as np
import pytest

from lbpcnn.synthetic import generate_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """30 + 30 synthetic 32x32 images with a manifest."""
    out = tmp_path_factory.mktemp("synth")
    manifest = generate_synthetic_dataset(30, 32, seed=7, out_dir=out)
    return out, manifest


# one PASS/FAIL line per acceptance criterion, printed after the run

_VERDICTS = {}
_SETUP_SECONDS = pytest.StashKey[float]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    if rep.when == "setup":
        item.stash[_SETUP_SECONDS] = rep.duration
    if rep.when == "call" or rep.failed:
        seconds = rep.duration + (item.stash.get(_SETUP_SECONDS, 0.0) if rep.when == "call" else 0.0)
        detail = "; ".join(f"{k}={v}" for k, v in rep.user_properties)
        _VERDICTS[number] = (title, "PASS" if rep.passed else "FAIL", seconds, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, verdict, seconds, detail = _VERDICTS[number]
        extra = f" [{detail}]" if detail else ""
        terminalreporter.write_line(f"[{verdict}] criterion {number:2d}: {title} ({seconds:.2f} s){extra}")
