import numpy as np
import pytest

from momlp import datagen as dg

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_fk():
    """60 knapsack samples with 4 items, d = 3, observed objectives attached."""
    ks = dg.KnapsackSpec(n_items=4, d=3, price_mode="uniform-0-1")
    rng = dg.rng_for(11, 0)
    V = dg.GroundTruth.draw(ks.n_items, ks.d, rng).V
    noise = dg.NoiseSpec(deg=1, eta_bar=1.0)
    return [dg.gen_fk_instance(V, ks, noise, rng) for _ in range(60)]


@pytest.fixture(scope="session")
def small_sp():
    """40 shortest-path samples on a 3 x 3 grid."""
    grid = dg.GridSpec(k=3)
    rng = dg.rng_for(12, 0)
    V = dg.GroundTruth.draw(grid.n_edges, 4, rng).V
    return [dg.gen_sp_instance(V, dg.NoiseSpec(deg=2, eps_bar=0.2), rng, grid) for _ in range(40)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
