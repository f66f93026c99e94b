import time

import pytest

from qmvit.cli import main
from qmvit.data import make_toyset


@pytest.fixture(scope="session")
def toyset(tmp_path_factory):
    """The acceptance dataset: seed 7, 4 classes x 64 images, 16 x 16."""
    return make_toyset(tmp_path_factory.mktemp("toyset"), seed=7, n_classes=4, n_per_class=64, size=16)


@pytest.fixture(scope="session")
def small_toyset(tmp_path_factory):
    return make_toyset(tmp_path_factory.mktemp("small"), seed=3, n_classes=3, n_per_class=6, size=8)


_RUNS = {}


@pytest.fixture(scope="session")
def trained(toyset, tmp_path_factory):
    """Train a preset for 30 epochs on the toyset once per session; returns (run dir, seconds)."""

    def run(preset: str):
        if preset not in _RUNS:
            out = tmp_path_factory.mktemp(f"run-{preset}")
            t0 = time.perf_counter()
            code = main(["train", "--preset", preset, "--manifest", str(toyset), "--epochs", "30",
                         "--out_dir", str(out)])
            assert code == 0
            _RUNS[preset] = (out, time.perf_counter() - t0)
        return _RUNS[preset]

    return run


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(name: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
