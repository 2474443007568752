"""Random graphs, sheaf families, potentials and initial conditions.

Every generator is a pure function of its arguments and seed.
"""

import numpy as np
import networkx
import scipy.linalg

from execo_engine import logger

from sheaf_diffusion.objects import CellularSheaf, Cochain0, \
    ConfigurationException, GenerationException, Graph, ParameterException
from sheaf_diffusion.potentials import OffsetQuadraticPotential, \
    PotentialSet, QuadraticPotential


DEFAULT_MAX_RETRIES = 1000
DEFAULT_QR_TOLERANCE = 1e-10
EIGENVALUE_CLIP = 1e-12

REGULAR = "regular"
ERDOS_RENYI = "erdos_renyi"
EXPLICIT = "explicit"
GRAPH_KINDS = (REGULAR, ERDOS_RENYI, EXPLICIT)

CONSTANT = "constant"
RANDOM_RESTRICTION = "random_restriction"
MATRIX_WEIGHTED = "matrix_weighted"
SHEAF_KINDS = (CONSTANT, RANDOM_RESTRICTION, MATRIX_WEIGHTED)

OFFSETS_IN_IMAGE = "image"
OFFSETS_RANDOM = "random"

# Vertices 0..5 are agents 1..6: leaders 0 and 3, followers 1, 2 and 4, 5.
UAV_VERTEX_COUNT = 6
UAV_LEADER_FOLLOWER = ((0, 1), (0, 2), (3, 4), (3, 5))
UAV_FOLLOWER_FOLLOWER = ((1, 2), (4, 5))
UAV_LEADER_LEADER = (0, 3)


def _fail(msg, exception=ParameterException):
    logger.error(msg)
    raise exception(msg)


# Graphs ######################################################################

def random_regular_graph(n, k, seed, max_retries=DEFAULT_MAX_RETRIES):
    """Sample a simple k-regular graph with the pairing model.

    The n k half-edges are shuffled and paired in order; pairings with a
    self-loop or a repeated edge are rejected and drawn again.

    Args:
      n (int):
        Number of vertices.
      k (int):
        Degree, k < n and n k even.
      seed (int):
        The random seed.
      max_retries (int, optional):
        Number of pairings drawn before giving up.

    Returns (Graph):
      The graph, edges sorted.

    Raises:
      GenerationException:
        If no simple pairing was found.
    """

    if n < 1 or k < 0 or k >= max(n, 1) or (n * k) % 2 != 0:
        _fail("No simple %d-regular graph on %d vertices" % (k, n))

    rng = np.random.default_rng(seed)
    points = np.repeat(np.arange(n), k)
    for _ in range(max_retries):
        pairs = rng.permutation(points).reshape(-1, 2)
        edges = set()
        for (i, j) in pairs:
            e = (int(min(i, j)), int(max(i, j)))
            if i == j or e in edges:
                break
            edges.add(e)
        else:
            return Graph(n, sorted(edges))

    _fail("Pairing model found no simple %d-regular graph on %d vertices "
          "after %d retries" % (k, n, max_retries), GenerationException)


def erdos_renyi(n, p, seed):
    """Sample G(n, p): each vertex pair is an edge with probability p."""

    if n < 1:
        _fail("Number of vertices must be positive")
    if not 0 <= p <= 1:
        _fail("Edge probability must lie in [0, 1], got %s" % str(p))

    g = networkx.gnp_random_graph(n, p, seed=seed)
    return Graph(n, sorted((min(i, j), max(i, j)) for (i, j) in g.edges()))


# Sheaves #####################################################################

def _check_dim(name, dim):
    if int(dim) != dim or dim < 1:
        _fail("%s must be a positive integer, got %s" % (name, str(dim)))


def constant_sheaf(graph, dim):
    """The constant sheaf R^dim: every stalk R^dim, every map the identity."""

    _check_dim("dim", dim)
    identity = np.eye(dim)
    restrictions = {}
    for e in graph.edges:
        for v in e:
            restrictions[v, e] = identity
    return CellularSheaf(graph, [dim] * graph.vertex_count,
                         [dim] * len(graph.edges), restrictions)


def random_restriction_sheaf(graph, vertex_dim, edge_dim, seed):
    """Sheaf with i.i.d. Uniform[0, 1] restriction entries.

    The two maps of an edge are drawn independently, first the one of the
    smaller endpoint.
    """

    _check_dim("vertex_dim", vertex_dim)
    _check_dim("edge_dim", edge_dim)
    rng = np.random.default_rng(seed)
    restrictions = {}
    for e in graph.edges:
        for v in e:
            restrictions[v, e] = rng.uniform(0.0, 1.0, (edge_dim, vertex_dim))
    return CellularSheaf(graph, [vertex_dim] * graph.vertex_count,
                         [edge_dim] * len(graph.edges), restrictions)


def restriction_from_weight(weight, tol=DEFAULT_QR_TOLERANCE):
    """Factor a PSD weight W as F^T F with F from a rank-revealing QR.

    Column-pivoted QR of the PSD square root of W; R is truncated to the rows
    whose pivot exceeds tol * |R_11| and its columns are put back in the
    original order.

    Returns (numpy.ndarray):
      F with rank(W) rows, or a single zero row when W vanishes.
    """

    weight = np.asarray(weight, dtype=float)
    weight = 0.5 * (weight + weight.T)
    dim = weight.shape[0]

    vals, vecs = scipy.linalg.eigh(weight)
    top = max(float(vals[-1]), 0.0)
    vals = np.where(vals > EIGENVALUE_CLIP * top, vals, 0.0)
    root = (vecs * np.sqrt(vals)).dot(vecs.T)

    _, r_factor, perm = scipy.linalg.qr(root, pivoting=True)
    pivots = np.abs(np.diag(r_factor))
    rank = int(np.sum(pivots > tol * pivots[0])) if pivots[0] > 0 else 0

    factor = np.zeros((max(rank, 1), dim))
    factor[:rank, perm] = r_factor[:rank]
    return factor


def random_weight(rng, dim, positive_definite):
    """W = G^T G with G dim x dim (PD almost surely) or (dim-1) x dim."""

    rows = dim if positive_definite else dim - 1
    g = rng.standard_normal((rows, dim))
    return g.T.dot(g)


def matrix_weighted_sheaf(graph, dim, pd_probability, seed):
    """Realize a random matrix-weighted graph as a sheaf.

    Each edge gets a random PSD weight W_ij, strictly positive definite with
    probability pd_probability, and both restriction maps equal the factor F
    of restriction_from_weight, so the sheaf Laplacian has diagonal blocks
    sum_j W_ij and off-diagonal blocks -W_ij.

    Returns:
      (sheaf, weights) with weights a dict edge -> W_ij.
    """

    _check_dim("dim", dim)
    if not 0 <= pd_probability <= 1:
        _fail("pd_probability must lie in [0, 1], got %s" % str(pd_probability))

    rng = np.random.default_rng(seed)
    weights = {}
    restrictions = {}
    edge_dims = []
    for e in graph.edges:
        positive_definite = rng.uniform() < pd_probability
        w = random_weight(rng, dim, positive_definite)
        f = restriction_from_weight(w)
        weights[e] = w
        edge_dims.append(f.shape[0])
        for v in e:
            restrictions[v, e] = f

    sheaf = CellularSheaf(graph, [dim] * graph.vertex_count, edge_dims,
                          restrictions)
    return sheaf, weights


def matrix_weighted_laplacian(graph, weights, dim):
    """Assemble the matrix-weighted Laplacian directly from the weights."""

    n = graph.vertex_count
    laplacian = np.zeros((n * dim, n * dim))
    for (i, j) in graph.edges:
        w = weights[i, j]
        si, sj = slice(i * dim, (i + 1) * dim), slice(j * dim, (j + 1) * dim)
        laplacian[si, si] += w
        laplacian[sj, sj] += w
        laplacian[si, sj] -= w
        laplacian[sj, si] -= w
    return laplacian


def uav_formation_sheaf(displacements):
    """The coordination sheaf of two moving UAV formations.

    Six agents with state (position, velocity) in R^3 + R^3. Leaders 0 and 3
    agree on velocity; each leader keeps its two followers at the given
    displacements; follower-follower edges carry zero maps.

    Args:
      displacements (list of 4 vectors or dict):
        The displacements p_i - p_j wanted on edges (0, 1), (0, 2), (3, 4)
        and (3, 5), in that order, or a dict keyed by those edges.

    Returns:
      (sheaf, potentials).
    """

    if isinstance(displacements, dict):
        displacements = [displacements[e] for e in UAV_LEADER_FOLLOWER]
    displacements = [np.asarray(d, dtype=float).ravel() for d in displacements]
    if len(displacements) != 4 or any(d.shape != (3,) for d in displacements):
        _fail("Expected four 3-dimensional displacements",
              ConfigurationException)

    position = np.hstack([np.eye(3), np.zeros((3, 3))])
    velocity = np.hstack([np.zeros((3, 3)), np.eye(3)])
    zero = np.zeros((3, 6))

    edges = [UAV_LEADER_FOLLOWER[0], UAV_LEADER_FOLLOWER[1],
             UAV_FOLLOWER_FOLLOWER[0], UAV_LEADER_FOLLOWER[2],
             UAV_LEADER_FOLLOWER[3], UAV_FOLLOWER_FOLLOWER[1],
             UAV_LEADER_LEADER]
    graph = Graph(UAV_VERTEX_COUNT, edges)

    restrictions = {}
    potentials = {}
    for e, d in zip(UAV_LEADER_FOLLOWER, displacements):
        restrictions[e[0], e] = position
        restrictions[e[1], e] = position
        potentials[e] = OffsetQuadraticPotential(d)
    for e in UAV_FOLLOWER_FOLLOWER:
        restrictions[e[0], e] = zero
        restrictions[e[1], e] = zero
        potentials[e] = QuadraticPotential()
    restrictions[0, UAV_LEADER_LEADER] = velocity
    restrictions[3, UAV_LEADER_LEADER] = velocity
    potentials[UAV_LEADER_LEADER] = QuadraticPotential()

    sheaf = CellularSheaf(graph, [6] * UAV_VERTEX_COUNT, [3] * len(edges),
                          restrictions)
    return sheaf, PotentialSet(potentials)


def uav_formation_energy(x, displacements):
    """Evaluate 1/2 |v_1 - v_4|^2 + sum 1/2 |p_i - p_j - d_ij|^2 directly from
    a flat (6 x 6) state vector."""

    states = np.asarray(x, dtype=float).reshape(UAV_VERTEX_COUNT, 6)
    (a, b) = UAV_LEADER_LEADER
    energy = 0.5 * np.sum((states[a, 3:] - states[b, 3:]) ** 2)
    for (i, j), d in zip(UAV_LEADER_FOLLOWER, displacements):
        energy += 0.5 * np.sum((states[i, :3] - states[j, :3] - d) ** 2)
    return float(energy)


# Potentials and initial conditions ###########################################

def offset_potentials(sheaf, seed, mode=OFFSETS_IN_IMAGE, scale=1.0):
    """Random offset_quadratic potentials on every edge.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      seed (int):
        The random seed.
      mode (str, optional):
        "image": offsets b = delta z for a Gaussian z, so f* = 0.
        "random": Gaussian offsets, in general not realizable.
      scale (float, optional):
        Standard deviation of z or of the offsets.

    Returns (PotentialSet):
      The potentials.
    """

    rng = np.random.default_rng(seed)
    if mode == OFFSETS_IN_IMAGE:
        z = scale * rng.standard_normal(sheaf.c0_dim)
        b = sheaf.dense_coboundary().dot(z)
    elif mode == OFFSETS_RANDOM:
        b = scale * rng.standard_normal(sheaf.c1_dim)
    else:
        _fail("Unknown offset mode '%s'" % str(mode), ConfigurationException)

    return PotentialSet(dict(
        (e, OffsetQuadraticPotential(b[sheaf.edge_slice(k)]))
        for k, e in enumerate(sheaf.edges)))


def gaussian_initial_condition(sheaf, variance, seed):
    """i.i.d. N(0, variance) entries on every vertex stalk."""

    if not variance > 0:
        _fail("Variance must be positive, got %s" % str(variance))
    rng = np.random.default_rng(seed)
    return Cochain0(sheaf, rng.normal(0.0, np.sqrt(variance), sheaf.c0_dim))


# Configuration ###############################################################

class GeneratorConfig(object):
    """Parameters of a generated instance.

    Attributes:
      graph_kind (str):
        regular, erdos_renyi or explicit.
      n, k, p:
        Vertex count, degree and edge probability.
      edges (list of pairs):
        The edges of an explicit graph.
      sheaf_kind (str):
        constant, random_restriction or matrix_weighted.
      dim (int):
        Stalk dimension of constant and matrix-weighted sheaves.
      vertex_dim, edge_dim (int):
        Stalk dimensions of random-restriction sheaves.
      pd_probability (float):
        Probability of a strictly positive definite weight.
    """

    def __init__(self, graph_kind=REGULAR, n=20, k=4, p=0.3, edges=None,
                 sheaf_kind=CONSTANT, dim=4, vertex_dim=4, edge_dim=1,
                 pd_probability=0.2):
        self.graph_kind = graph_kind
        self.n = n
        self.k = k
        self.p = p
        self.edges = [tuple(e) for e in edges] if edges else []
        self.sheaf_kind = sheaf_kind
        self.dim = dim
        self.vertex_dim = vertex_dim
        self.edge_dim = edge_dim
        self.pd_probability = pd_probability
        self.validate()

    def validate(self):
        if self.graph_kind not in GRAPH_KINDS:
            _fail("Unknown graph kind '%s'" % str(self.graph_kind),
                  ConfigurationException)
        if self.sheaf_kind not in SHEAF_KINDS:
            _fail("Unknown sheaf kind '%s'" % str(self.sheaf_kind),
                  ConfigurationException)
        if self.n < 1:
            _fail("n must be positive")
        if self.graph_kind == REGULAR and \
                (self.k < 0 or self.k >= self.n or (self.n * self.k) % 2):
            _fail("n k must be even and k < n, got n = %d, k = %d" %
                  (self.n, self.k))
        if not 0 <= self.p <= 1:
            _fail("p must lie in [0, 1]")
        for name in ("dim", "vertex_dim", "edge_dim"):
            _check_dim(name, getattr(self, name))
        if not 0 <= self.pd_probability <= 1:
            _fail("pd_probability must lie in [0, 1]")

    def make_graph(self, seed):
        if self.graph_kind == REGULAR:
            return random_regular_graph(self.n, self.k, seed)
        elif self.graph_kind == ERDOS_RENYI:
            return erdos_renyi(self.n, self.p, seed)
        return Graph(self.n, self.edges)

    def make_sheaf(self, graph, seed):
        """Return (sheaf, weights), weights None unless matrix-weighted."""

        if self.sheaf_kind == CONSTANT:
            return constant_sheaf(graph, self.dim), None
        elif self.sheaf_kind == RANDOM_RESTRICTION:
            return random_restriction_sheaf(graph, self.vertex_dim,
                                            self.edge_dim, seed), None
        return matrix_weighted_sheaf(graph, self.dim, self.pd_probability,
                                     seed)

    def to_dict(self):
        return {"graph_kind": self.graph_kind, "n": self.n, "k": self.k,
                "p": self.p, "edges": [list(e) for e in self.edges],
                "sheaf_kind": self.sheaf_kind, "dim": self.dim,
                "vertex_dim": self.vertex_dim, "edge_dim": self.edge_dim,
                "pd_probability": self.pd_probability}
