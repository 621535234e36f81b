import numpy as np
import pytest

from Basis import natural_spline_basis
from designs.synthetic import simulate_var
from Panel import NeighborGraph, PanelData, build_sparsity


def make_panel(seed=3, n=3, T=16, adopt=(9, 11, 17), a_diag=0.4, noise=0.5):
    """
    Small local-mean VAR panel with linear trends.
    """
    rng = np.random.default_rng(seed)
    times = np.arange(1, T + 1)
    trend = 10.0 + np.arange(n)[:, None] + 0.2 * times[None, :]
    outcomes = simulate_var(trend, a_diag * np.eye(n), noise**2 * np.eye(n), rng, burn=20)
    return PanelData(tuple(f"u{i + 1}" for i in range(n)), outcomes, np.array(adopt))


@pytest.fixture
def panel():
    return make_panel()


@pytest.fixture
def graph():
    return NeighborGraph(frozenset({("u1", "u2"), ("u2", "u3")}))


@pytest.fixture
def pattern(panel, graph):
    return build_sparsity(panel, graph, adoption_gap=12)


@pytest.fixture
def basis(panel):
    return natural_spline_basis(panel.times, 3)
