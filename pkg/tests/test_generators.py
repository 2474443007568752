import numpy as np
import pytest

from sheaf_diffusion.generators import CONSTANT, ERDOS_RENYI, EXPLICIT, \
    MATRIX_WEIGHTED, OFFSETS_RANDOM, RANDOM_RESTRICTION, REGULAR, \
    GeneratorConfig, constant_sheaf, erdos_renyi, \
    gaussian_initial_condition, matrix_weighted_laplacian, \
    matrix_weighted_sheaf, offset_potentials, random_regular_graph, \
    random_restriction_sheaf, random_weight, restriction_from_weight, \
    uav_formation_energy, uav_formation_sheaf
from sheaf_diffusion.objects import ConfigurationException, \
    GenerationException, Graph, ParameterException
from sheaf_diffusion.potentials import energy_minimum, energy_of_values
from sheaf_diffusion.sheaf import linear_laplacian


def test_random_regular_graph():
    graph = random_regular_graph(20, 4, 3)
    assert graph.vertex_count == 20
    assert len(graph.edges) == 40
    assert all(graph.degree(i) == 4 for i in range(20))
    assert list(graph.edges) == sorted(graph.edges)
    assert graph == random_regular_graph(20, 4, 3)


@pytest.mark.parametrize("n, k", [(5, 3), (4, 4), (0, 2)])
def test_random_regular_graph_rejects_impossible_degrees(n, k):
    with pytest.raises(ParameterException):
        random_regular_graph(n, k, 0)


def test_random_regular_graph_gives_up():
    with pytest.raises(GenerationException):
        random_regular_graph(6, 2, 0, max_retries=0)
    assert GenerationException.retryable


def test_erdos_renyi():
    assert erdos_renyi(6, 0.0, 1).edges == ()
    assert len(erdos_renyi(6, 1.0, 1).edges) == 15
    assert erdos_renyi(15, 0.3, 8) == erdos_renyi(15, 0.3, 8)
    with pytest.raises(ParameterException):
        erdos_renyi(5, 1.5, 0)


def test_constant_sheaf_maps():
    sheaf = constant_sheaf(Graph(3, [(0, 1), (1, 2)]), 3)
    assert sheaf.vertex_dims == (3, 3, 3)
    assert sheaf.edge_dims == (3, 3)
    assert np.array_equal(sheaf.restriction(2, (1, 2)), np.eye(3))
    with pytest.raises(ParameterException):
        constant_sheaf(Graph(2, [(0, 1)]), 0)


def test_random_restriction_sheaf():
    graph = random_regular_graph(10, 4, 0)
    sheaf = random_restriction_sheaf(graph, 4, 2, 5)
    assert sheaf.c0_dim == 40
    assert sheaf.c1_dim == 2 * len(graph.edges)
    for matrix in sheaf.restrictions().values():
        assert matrix.shape == (2, 4)
        assert np.all((matrix >= 0) & (matrix < 1))
    again = random_restriction_sheaf(graph, 4, 2, 5)
    assert all(np.array_equal(again.restriction(v, e), m)
               for (v, e), m in sheaf.restrictions().items())


def test_restriction_from_weight_factors(rng):
    for dim in range(1, 5):
        for positive_definite in (True, False):
            w = random_weight(rng, dim, positive_definite)
            f = restriction_from_weight(w)
            assert f.shape[1] == dim
            assert np.allclose(f.T.dot(f), w, atol=1e-8)
            if not positive_definite and dim > 1:
                assert f.shape[0] == dim - 1


def test_restriction_from_zero_weight():
    f = restriction_from_weight(np.zeros((3, 3)))
    assert f.shape == (1, 3)
    assert np.all(f == 0)


def test_matrix_weighted_laplacian_matches_sheaf():
    for seed in range(20):
        graph = erdos_renyi(8, 0.4, seed)
        dim = 1 + seed % 4
        sheaf, weights = matrix_weighted_sheaf(graph, dim, 0.2, seed)
        expected = matrix_weighted_laplacian(graph, weights, dim)
        assert np.max(np.abs(linear_laplacian(sheaf) - expected)) <= 1e-8
        for k, e in enumerate(graph.edges):
            vals = np.linalg.eigvalsh(weights[e])
            rank = int(np.sum(vals > 1e-9 * max(vals[-1], 0.0)))
            assert sheaf.edge_dims[k] == max(rank, 1)


def test_matrix_weighted_pd_probability():
    graph = random_regular_graph(10, 4, 1)
    sheaf, weights = matrix_weighted_sheaf(graph, 3, 1.0, 2)
    assert all(d == 3 for d in sheaf.edge_dims)
    sheaf, weights = matrix_weighted_sheaf(graph, 3, 0.0, 2)
    assert all(d == 2 for d in sheaf.edge_dims)


def test_uav_sheaf_layout():
    displacements = [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    sheaf, potentials = uav_formation_sheaf(displacements)
    assert sheaf.vertex_dims == (6,) * 6
    assert len(sheaf.edges) == 7
    assert all(d == 3 for d in sheaf.edge_dims)
    assert np.all(sheaf.restriction(1, (1, 2)) == 0)
    assert np.array_equal(sheaf.restriction(0, (0, 3))[:, 3:], np.eye(3))


def test_uav_energy_matches_sheaf(rng):
    displacements = [rng.standard_normal(3) for _ in range(4)]
    sheaf, potentials = uav_formation_sheaf(displacements)
    for _ in range(5):
        x = rng.standard_normal(36)
        assert energy_of_values(sheaf, potentials, x) == \
            pytest.approx(uav_formation_energy(x, displacements), rel=1e-12)


def test_uav_formation_is_realizable():
    sheaf, potentials = uav_formation_sheaf(
        {(0, 1): [1, 0, 0], (0, 2): [0, 1, 0], (3, 4): [-1, 0, 0],
         (3, 5): [0, -1, 0]})
    minimum = energy_minimum(sheaf, potentials)
    assert minimum.consistent
    assert minimum.f_star == 0.0


def test_uav_rejects_bad_displacements():
    with pytest.raises(ConfigurationException):
        uav_formation_sheaf([[1, 0, 0]] * 3)
    with pytest.raises(ConfigurationException):
        uav_formation_sheaf([[1, 0]] * 4)


def test_random_offsets(rng, random_sheaf):
    sheaf = random_sheaf(rng)
    potentials = offset_potentials(sheaf, 0, OFFSETS_RANDOM, scale=2.0)
    assert len(potentials) == len(sheaf.edges)
    assert potentials.quadratic_family
    with pytest.raises(ConfigurationException):
        offset_potentials(sheaf, 0, "anywhere")


def test_gaussian_initial_condition(cycle_sheaf):
    x = gaussian_initial_condition(cycle_sheaf, 10.0, 3)
    assert len(x) == 6
    assert np.array_equal(x.values,
                          gaussian_initial_condition(cycle_sheaf, 10.0, 3).values)
    with pytest.raises(ParameterException):
        gaussian_initial_condition(cycle_sheaf, 0.0, 3)


def test_generator_config():
    config = GeneratorConfig(REGULAR, n=10, k=3, sheaf_kind=RANDOM_RESTRICTION,
                             vertex_dim=3, edge_dim=2)
    graph = config.make_graph(1)
    sheaf, weights = config.make_sheaf(graph, 2)
    assert weights is None
    assert sheaf.vertex_dims == (3,) * 10
    assert config.to_dict()["sheaf_kind"] == RANDOM_RESTRICTION

    config = GeneratorConfig(EXPLICIT, n=3, edges=[(0, 1), (1, 2)],
                             sheaf_kind=MATRIX_WEIGHTED, dim=2)
    sheaf, weights = config.make_sheaf(config.make_graph(0), 0)
    assert set(weights) == {(0, 1), (1, 2)}

    config = GeneratorConfig(ERDOS_RENYI, n=5, p=1.0, sheaf_kind=CONSTANT,
                             dim=1)
    assert len(config.make_graph(0).edges) == 10


def test_generator_config_validation():
    with pytest.raises(ConfigurationException):
        GeneratorConfig(graph_kind="lattice")
    with pytest.raises(ConfigurationException):
        GeneratorConfig(sheaf_kind="twisted")
    with pytest.raises(ParameterException):
        GeneratorConfig(REGULAR, n=5, k=3)
    with pytest.raises(ParameterException):
        GeneratorConfig(ERDOS_RENYI, p=2.0)
