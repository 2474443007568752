import numpy as np
import pytest

from sheaf_diffusion.generators import constant_sheaf
from sheaf_diffusion.objects import CellularSheaf, Graph
from sheaf_diffusion.potentials import OffsetQuadraticPotential, \
    PotentialSet, QuadraticPotential, ScaledQuadraticPotential


def make_random_sheaf(rng, max_vertices=8, max_dim=4, edge_probability=0.5):
    """A sheaf with random stalk dimensions and Gaussian restriction maps
    over a random graph with at least one edge."""

    n = int(rng.integers(2, max_vertices + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.uniform() < edge_probability]
    if not pairs:
        pairs = [(0, 1)]
    graph = Graph(n, pairs)
    vertex_dims = [int(d) for d in rng.integers(1, max_dim + 1, n)]
    edge_dims = [int(d) for d in rng.integers(1, max_dim + 1, len(pairs))]
    restrictions = {}
    for k, e in enumerate(graph.edges):
        for v in e:
            restrictions[v, e] = rng.standard_normal((edge_dims[k],
                                                      vertex_dims[v]))
    return CellularSheaf(graph, vertex_dims, edge_dims, restrictions)


def make_mixed_potentials(rng, sheaf):
    """Quadratic, offset and scaled potentials drawn edge by edge."""

    potentials = {}
    for k, e in enumerate(sheaf.edges):
        choice = int(rng.integers(3))
        if choice == 0:
            potentials[e] = QuadraticPotential()
        elif choice == 1:
            potentials[e] = OffsetQuadraticPotential(
                rng.standard_normal(sheaf.edge_dims[k]))
        else:
            potentials[e] = ScaledQuadraticPotential(
                rng.uniform(0.5, 2.0), rng.standard_normal(sheaf.edge_dims[k]))
    return PotentialSet(potentials)


def connected_graph(rng, n, p=0.5):
    """A random connected graph: a random spanning path plus G(n, p) edges."""

    order = rng.permutation(n)
    edges = set((min(int(a), int(b)), max(int(a), int(b)))
                for a, b in zip(order[:-1], order[1:]))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.uniform() < p:
                edges.add((i, j))
    return Graph(n, sorted(edges))


@pytest.fixture
def rng():
    return np.random.default_rng(20231)


@pytest.fixture
def random_sheaf():
    return make_random_sheaf


@pytest.fixture
def mixed_potentials():
    return make_mixed_potentials


@pytest.fixture
def edge_sheaf():
    """The constant sheaf R^1 on a single edge."""
    return constant_sheaf(Graph(2, [(0, 1)]), 1)


@pytest.fixture
def cycle_sheaf():
    """The constant sheaf R^1 on the 6-cycle: lambda_2 = 1, lambda_max = 4."""
    return constant_sheaf(Graph(6, [(i, (i + 1) % 6) for i in range(6)]), 1)


@pytest.fixture
def two_stalk_sheaf():
    """A path 0 - 1 - 2 with stalks R^2, R^1, R^2 and hand-picked maps."""

    graph = Graph(3, [(0, 1), (1, 2)])
    restrictions = {(0, (0, 1)): [[1.0, 2.0]],
                    (1, (0, 1)): [[3.0]],
                    (1, (1, 2)): [[-1.0], [0.5]],
                    (2, (1, 2)): [[1.0, 0.0], [0.0, 1.0]]}
    return CellularSheaf(graph, [2, 1, 2], [1, 2], restrictions)
