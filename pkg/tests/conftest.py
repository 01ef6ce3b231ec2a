from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic_corpus import generate  # noqa: E402

ORL_ENV = "ORL_ROOT"
SURROGATE_EPOCHS = 25

_results: list[tuple[str, str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "BLOCKED"}[rep.outcome]
        note = ""
        if rep.skipped and isinstance(rep.longrepr, tuple):
            note = rep.longrepr[2].removeprefix("Skipped: ")
        _results.append((marker.args[0], marker.args[1], status, note))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid, title, status, note in _results:
        line = f"[{status:7s}] criterion {cid:<12s} {title}"
        terminalreporter.write_line(line + (f"  ({note})" if note else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory) -> Path:
    return generate(tmp_path_factory.mktemp("synthetic"), seed=0)


@pytest.fixture(scope="session")
def orl_root() -> Path:
    root = os.environ.get(ORL_ENV)
    if not root:
        pytest.skip(f"ORL corpus not available; set {ORL_ENV} to an ORL s1..s40 directory")
    path = Path(root)
    if not (path / "s1" / "1.pgm").is_file():
        pytest.skip(f"{ORL_ENV}={root} does not look like an ORL directory")
    return path


def _train_run(root: Path, epochs: int, seed: int = 1) -> dict:
    from siamface.data import load_corpus, split
    from siamface.siamese import SiameseNetwork, TrainConfig, train

    data_split = split(load_corpus(root), seed=seed)
    net = SiameseNetwork.build(seed)
    reports = train(net, data_split, TrainConfig(epochs=epochs, seed=seed))
    return {"net": net, "split": data_split, "reports": reports}


@pytest.fixture(scope="session")
def orl_run(orl_root) -> dict:
    """Full default training on ORL (100 epochs, seed 1)."""
    return _train_run(orl_root, epochs=100)


@pytest.fixture(scope="session")
def surrogate_run(synthetic_root) -> dict:
    """Short training on the synthetic stand-in corpus."""
    return _train_run(synthetic_root, epochs=SURROGATE_EPOCHS)
