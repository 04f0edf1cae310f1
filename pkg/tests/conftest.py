import numpy as np
import pytest

from skiprec.ingest import H, L, N, LabeledPair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pairs(rng, n_users, n_videos, density=0.5, classes=(H, L, N)):
    """Random deduplicated labeled pairs; every user gets at least one."""
    pairs = []
    for u in range(n_users):
        mask = rng.random(n_videos) < density
        mask[rng.integers(n_videos)] = True
        for v in np.flatnonzero(mask):
            pairs.append(LabeledPair(u, int(v), classes[rng.integers(len(classes))]))
    return pairs


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
