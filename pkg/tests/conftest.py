import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).resolve().parents[1] / "src" / "evsumm" / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def trained_dir(tmp_path_factory):
    """A small checkpoint trained on the bundled desk pairs."""
    from evsumm import corpus, pipeline

    out = tmp_path_factory.mktemp("trained")
    run = pipeline.load_run_config(None, seed=0)
    run.model = run.model.replace(embedding_dim=16, hidden_dim=16, epochs=15, batch_size=8)
    pairs = corpus.load_pairs(DATA / "desk_pairs.jsonl", run.filters)
    pipeline.train_from_pairs(pairs, run, out)
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
