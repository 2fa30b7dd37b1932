import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irs_engine.data_model import ingest  # noqa: E402
from irs_engine.scm_synth import ScmConfig, linear_encoder  # noqa: E402


@pytest.fixture
def hand_2x2():
    """Crossed 2x2 factors with Z0 = g0 + 0.5 g1."""
    g = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    return ingest(g[:, 0] + 0.5 * g[:, 1], g)


@pytest.fixture
def confounded_cfg():
    """C -> {G0, G1}; each copies C with probability 0.9. G2 is independent."""
    doc = {
        "confounders": [{"name": "c", "cardinality": 2, "prior": [0.5, 0.5]}],
        "factors": [
            {"name": "g_0", "cardinality": 2, "parents": ["c"], "table": [[0.9, 0.1], [0.1, 0.9]]},
            {"name": "g_1", "cardinality": 2, "parents": ["c"], "table": [[0.9, 0.1], [0.1, 0.9]]},
            {"name": "g_2", "cardinality": 3, "table": [[0.2, 0.3, 0.5]]},
        ],
        "seed": 0,
    }
    return ScmConfig.from_dict(doc)


@pytest.fixture
def confounded_encoder():
    return linear_encoder([[1.0, 2.0, 1.0]])


def random_dataset(rng, n, cards, n_features, confounded=False):
    """Random labeled dataset; factor columns remapped so cardinalities are tight."""
    k = len(cards)
    if confounded:
        c = rng.integers(0, 2, n)
        g = np.stack(
            [np.where(rng.random(n) < 0.7, c * (card - 1), rng.integers(0, card, n)) for card in cards],
            axis=1,
        )
    else:
        g = np.stack([rng.integers(0, card, n) for card in cards], axis=1)
    z = rng.normal(size=(n, n_features)) + g @ rng.normal(size=(k, n_features))
    keep = [i for i in range(k) if np.unique(g[:, i]).size > 1]
    return ingest(z, g[:, keep])


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
