import numpy as np
import pytest

from rcondist.graph import ColouredGraph
from rcondist.rcon import build_spec, k_of_theta


def random_coloured_graph(rng, p, edge_prob=0.3, n_vclasses=None, n_eclasses=None):
    """Random skeleton with a random colouring (classes may span far apart)."""
    edges = [(a, b) for a in range(p) for b in range(a + 1, p) if rng.random() < edge_prob]
    t = n_vclasses or int(rng.integers(1, p + 1))
    labels = np.concatenate([np.arange(t), rng.integers(0, t, p - t)])[:p]
    rng.shuffle(labels)
    vc = [[int(v) for v in np.flatnonzero(labels == k)] for k in range(t) if np.any(labels == k)]
    ec = []
    if edges:
        s = n_eclasses or int(rng.integers(1, len(edges) + 1))
        el = np.concatenate([np.arange(s), rng.integers(0, s, len(edges) - s)])[: len(edges)]
        rng.shuffle(el)
        ec = [[edges[j] for j in np.flatnonzero(el == k)] for k in range(s) if np.any(el == k)]
    return ColouredGraph.from_lists(p, edges, vc, ec)


def random_cone_theta(rng, g):
    """Diagonally dominant point of the cone of ``g``."""
    spec = build_spec(g)
    theta = np.empty(spec.n_params)
    T = g.n_vertex_classes
    theta[T:] = rng.uniform(-1, 1, spec.n_params - T)
    deg = max([len(g.neighbours(v)) for v in range(g.p)] + [0])
    theta[:T] = deg + 0.5 + rng.uniform(0, 2, T)
    return theta


def random_cone_point(rng, g):
    spec = build_spec(g)
    theta = random_cone_theta(rng, g)
    return spec, theta, k_of_theta(spec, theta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
