import numpy as np
import networkx

from execo_engine import logger


class SheafException(Exception):
    pass


class StructuralException(SheafException):
    pass


class ConfigurationException(SheafException):
    pass


class ParameterException(ConfigurationException):
    pass


class StepSizeException(SheafException):
    pass


class GenerationException(SheafException):
    retryable = True


class SpectralException(SheafException):
    pass


def normalize_edge(i, j):
    """Return the canonical (min, max) form of the unordered edge ij."""

    return (i, j) if i < j else (j, i)


def _read_only(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


class Graph(object):
    """This class represents a simple undirected communication graph.

    Vertices are the integers 0..vertex_count-1. Edges are stored in their
    canonical (min, max) orientation and keep the order in which they were
    given, which fixes the layout of the 1-cochains.

    Attributes:
      vertex_count (int):
        The number of vertices.
      edges (tuple of (int, int)):
        The edges, each as an ordered pair (i, j) with i < j.
    """

    def __init__(self, vertex_count, edges=()):
        """Create a new graph.

        Args:
          vertex_count (int):
            The number of vertices, at least 1.
          edges (iterable of pairs, optional):
            The unordered vertex pairs. ij and ji denote the same edge.

        Raises:
          StructuralException:
            If there are self-loops, duplicate edges or unknown vertices.
        """

        if int(vertex_count) != vertex_count or vertex_count < 1:
            msg = "vertex_count must be a positive integer, got %s" % \
                  str(vertex_count)
            logger.error(msg)
            raise StructuralException(msg)

        self.vertex_count = int(vertex_count)

        normalized = []
        seen = set()
        for (i, j) in edges:
            i, j = int(i), int(j)
            if i == j:
                msg = "Self-loop on vertex %d" % i
                logger.error(msg)
                raise StructuralException(msg)
            if not (0 <= i < vertex_count and 0 <= j < vertex_count):
                msg = "Edge (%d, %d) uses an unknown vertex" % (i, j)
                logger.error(msg)
                raise StructuralException(msg)
            e = normalize_edge(i, j)
            if e in seen:
                msg = "Duplicate edge (%d, %d)" % e
                logger.error(msg)
                raise StructuralException(msg)
            seen.add(e)
            normalized.append(e)

        self.edges = tuple(normalized)
        self._edge_index = dict((e, idx) for idx, e in enumerate(self.edges))

        self.nx_graph = networkx.Graph()
        self.nx_graph.add_nodes_from(range(self.vertex_count))
        self.nx_graph.add_edges_from(self.edges)

        self._neighbors = [sorted(self.nx_graph.neighbors(i))
                           for i in range(self.vertex_count)]

    def neighbors(self, i):
        """Return the sorted neighbor list N_i of vertex i."""
        return self._neighbors[i]

    def degree(self, i):
        return len(self._neighbors[i])

    def edge_index(self, i, j):
        """Return the position of edge ij in the edge list.

        Raises:
          StructuralException:
            If ij is not an edge of the graph.
        """

        try:
            return self._edge_index[normalize_edge(i, j)]
        except KeyError:
            msg = "(%d, %d) is not an edge" % (i, j)
            logger.error(msg)
            raise StructuralException(msg)

    def has_edge(self, i, j):
        return normalize_edge(i, j) in self._edge_index

    def num_components(self):
        return networkx.number_connected_components(self.nx_graph)

    def is_connected(self):
        return self.num_components() == 1

    def __len__(self):
        return self.vertex_count

    def __eq__(self, other):
        return (isinstance(other, Graph) and
                self.vertex_count == other.vertex_count and
                self.edges == other.edges)

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.vertex_count, self.edges))

    def __str__(self):
        return "Graph(%d vertices, %d edges)" % (self.vertex_count,
                                                 len(self.edges))


class CellularSheaf(object):
    """This class represents a cellular sheaf over a graph.

    Every vertex i carries a stalk F(i) = R^vertex_dims[i], every edge e a
    stalk F(e) = R^edge_dims[e], and every incidence (i, e) a restriction map
    F_{i<e}, a matrix of shape edge_dims[e] x vertex_dims[i]. The sheaf stores
    explicit vertex and edge offsets; every flattening of a cochain is defined
    relative to them. Sheaves are immutable once created.

    Attributes:
      graph (Graph):
        The underlying graph.
      vertex_dims (tuple of int):
        The stalk dimension of every vertex.
      edge_dims (tuple of int):
        The stalk dimension of every edge, in graph edge order.
      vertex_offsets (numpy.ndarray):
        Start of each vertex block in a flat 0-cochain (length n + 1).
      edge_offsets (numpy.ndarray):
        Start of each edge block in a flat 1-cochain (length |E| + 1).
    """

    def __init__(self, graph, vertex_dims, edge_dims, restrictions):
        """Create a new sheaf.

        Args:
          graph (Graph):
            The underlying graph.
          vertex_dims (list of int):
            The vertex stalk dimensions.
          edge_dims (list of int):
            The edge stalk dimensions, in graph edge order.
          restrictions (dict):
            Maps (vertex, edge) to the restriction matrix, where edge is any
            orientation of an edge of the graph.

        Raises:
          StructuralException:
            If dimensions are not positive, a restriction map is missing or
            extra, or a map has the wrong shape.
        """

        self.graph = graph

        if len(vertex_dims) != graph.vertex_count:
            msg = "Expected %d vertex dimensions, got %d" % \
                  (graph.vertex_count, len(vertex_dims))
            logger.error(msg)
            raise StructuralException(msg)
        if len(edge_dims) != len(graph.edges):
            msg = "Expected %d edge dimensions, got %d" % \
                  (len(graph.edges), len(edge_dims))
            logger.error(msg)
            raise StructuralException(msg)
        if any(int(d) < 1 for d in list(vertex_dims) + list(edge_dims)):
            msg = "Stalk dimensions must be positive"
            logger.error(msg)
            raise StructuralException(msg)

        self.vertex_dims = tuple(int(d) for d in vertex_dims)
        self.edge_dims = tuple(int(d) for d in edge_dims)

        self.vertex_offsets = np.concatenate(
            ([0], np.cumsum(self.vertex_dims))).astype(int)
        self.edge_offsets = np.concatenate(
            ([0], np.cumsum(self.edge_dims))).astype(int)
        self.vertex_offsets.setflags(write=False)
        self.edge_offsets.setflags(write=False)

        maps = {}
        for (v, e), matrix in restrictions.items():
            e = normalize_edge(*e)
            if not graph.has_edge(*e) or v not in e:
                msg = "Restriction for (%s, %s) is not an incidence" % \
                      (str(v), str(e))
                logger.error(msg)
                raise StructuralException(msg)
            matrix = _read_only(matrix)
            if matrix.ndim == 1:
                matrix = _read_only(matrix.reshape(1, -1))
            expected = (self.edge_dims[graph.edge_index(*e)],
                        self.vertex_dims[v])
            if matrix.shape != expected:
                msg = "Restriction (%d, %s) has shape %s, expected %s" % \
                      (v, str(e), str(matrix.shape), str(expected))
                logger.error(msg)
                raise StructuralException(msg)
            maps[v, e] = matrix

        for e in graph.edges:
            for v in e:
                if (v, e) not in maps:
                    msg = "Missing restriction map (%d, %s)" % (v, str(e))
                    logger.error(msg)
                    raise StructuralException(msg)

        self._restrictions = maps
        self._coboundary = None

    @property
    def c0_dim(self):
        """Total vertex dimension, the dimension of C^0."""
        return int(self.vertex_offsets[-1])

    @property
    def c1_dim(self):
        """Total edge dimension, the dimension of C^1."""
        return int(self.edge_offsets[-1])

    @property
    def vertex_count(self):
        return self.graph.vertex_count

    @property
    def edges(self):
        return self.graph.edges

    def restriction(self, v, e):
        """Return the restriction map F_{v<e}."""
        return self._restrictions[v, normalize_edge(*e)]

    def restrictions(self):
        """Return a copy of the (vertex, edge) -> matrix dictionary."""
        return dict(self._restrictions)

    def vertex_slice(self, i):
        return slice(self.vertex_offsets[i], self.vertex_offsets[i + 1])

    def edge_slice(self, k):
        return slice(self.edge_offsets[k], self.edge_offsets[k + 1])

    def dense_coboundary(self):
        """Return the cached coboundary matrix in the default orientation.

        The returned array is read-only; see sheaf.coboundary_matrix for other
        orientations.
        """

        if self._coboundary is None:
            delta = np.zeros((self.c1_dim, self.c0_dim))
            for k, (a, b) in enumerate(self.edges):
                rows = self.edge_slice(k)
                delta[rows, self.vertex_slice(a)] = self._restrictions[a, (a, b)]
                delta[rows, self.vertex_slice(b)] = -self._restrictions[b, (a, b)]
            delta.setflags(write=False)
            self._coboundary = delta
        return self._coboundary

    def __str__(self):
        return "CellularSheaf(%s, dim C0 = %d, dim C1 = %d)" % \
               (str(self.graph), self.c0_dim, self.c1_dim)


class Cochain(object):
    """A flat block vector over the stalks of a sheaf.

    Values are copied on construction and stored read-only.
    """

    degree = None

    def __init__(self, sheaf, values):
        values = np.array(values, dtype=float).ravel()
        if values.shape[0] != self._expected_length(sheaf):
            msg = "%d-cochain of length %d does not conform to %s" % \
                  (self.degree, values.shape[0], str(sheaf))
            logger.error(msg)
            raise StructuralException(msg)
        values.setflags(write=False)
        self.sheaf = sheaf
        self.values = values

    def _expected_length(self, sheaf):
        raise NotImplementedError

    def _offsets(self):
        raise NotImplementedError

    def block(self, k):
        offsets = self._offsets()
        return self.values[offsets[k]:offsets[k + 1]]

    def blocks(self):
        return [self.block(k) for k in range(len(self._offsets()) - 1)]

    def norm(self):
        return float(np.linalg.norm(self.values))

    def _check_same(self, other):
        if not isinstance(other, type(self)) or \
                other.values.shape != self.values.shape:
            msg = "Cochain shapes do not match"
            logger.error(msg)
            raise StructuralException(msg)

    def __add__(self, other):
        self._check_same(other)
        return type(self)(self.sheaf, self.values + other.values)

    def __sub__(self, other):
        self._check_same(other)
        return type(self)(self.sheaf, self.values - other.values)

    def __mul__(self, scalar):
        return type(self)(self.sheaf, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.sheaf, -self.values)

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, np.array2string(self.values))


class Cochain0(Cochain):
    """A 0-cochain: one vector x_i in F(i) per vertex."""

    degree = 0

    def _expected_length(self, sheaf):
        return sheaf.c0_dim

    def _offsets(self):
        return self.sheaf.vertex_offsets

    @classmethod
    def from_blocks(cls, sheaf, blocks):
        return cls(sheaf, np.concatenate([np.ravel(b) for b in blocks])
                   if len(blocks) else [])

    @classmethod
    def zeros(cls, sheaf):
        return cls(sheaf, np.zeros(sheaf.c0_dim))


class Cochain1(Cochain):
    """A 1-cochain: one vector y_e in F(e) per edge."""

    degree = 1

    def _expected_length(self, sheaf):
        return sheaf.c1_dim

    def _offsets(self):
        return self.sheaf.edge_offsets

    @classmethod
    def from_blocks(cls, sheaf, blocks):
        return cls(sheaf, np.concatenate([np.ravel(b) for b in blocks])
                   if len(blocks) else [])

    @classmethod
    def zeros(cls, sheaf):
        return cls(sheaf, np.zeros(sheaf.c1_dim))
