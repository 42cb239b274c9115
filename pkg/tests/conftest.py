import os

import numpy as np
import pytest

os.environ.setdefault("PSYHIDE_WORKERS", "1")

from psyhide.acoustic_model import ToyAcousticModel  # noqa: E402
from psyhide.corpus import default_inventory, make_corpus  # noqa: E402
from psyhide.decoding import DecodingGraph  # noqa: E402
from psyhide.training import train_toy  # noqa: E402


@pytest.fixture(scope="session")
def inventory():
    return default_inventory()


@pytest.fixture(scope="session")
def graph(inventory):
    return DecodingGraph(inventory)


@pytest.fixture(scope="session")
def toy_model(inventory):
    """The reference toy recognizer: 100 synthetic utterances, 10 epochs per round."""
    model = ToyAcousticModel(n_states=inventory.n_states, hidden=(64,), batch_size=128, seed=0)
    model, _ = train_toy(model, make_corpus(100, inventory, seed=0), 10, inventory)
    return model


@pytest.fixture(scope="session")
def model_path(toy_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "toy.json"
    toy_model.save(path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
