"""Core operations on cellular sheaves: coboundary, Laplacians, global
sections and cohomology dimensions.

All functions take the sheaf as first argument and never modify it. Edges are
oriented (min(i, j), max(i, j)) unless an explicit orientation is given; every
quantity derived from the Laplacian is independent of that choice.
"""

import numpy as np
import scipy.linalg

from execo_engine import logger

from sheaf_diffusion.objects import Cochain0, Cochain1, \
    ConfigurationException, StructuralException, normalize_edge


DEFAULT_RANK_TOLERANCE = 1e-10


# Cochains ####################################################################

def as_cochain0(sheaf, x):
    """Return x as a Cochain0 of the given sheaf, checking its length."""

    if isinstance(x, Cochain0):
        if len(x) != sheaf.c0_dim:
            msg = "0-cochain does not conform to " + str(sheaf)
            logger.error(msg)
            raise StructuralException(msg)
        return x
    return Cochain0(sheaf, x)


def as_cochain1(sheaf, y):
    if isinstance(y, Cochain1):
        if len(y) != sheaf.c1_dim:
            msg = "1-cochain does not conform to " + str(sheaf)
            logger.error(msg)
            raise StructuralException(msg)
        return y
    return Cochain1(sheaf, y)


def inner_product_c0(x, x_prime):
    """Return <x, x'> in C^0, the sum of the blockwise Euclidean products."""

    if len(x) != len(x_prime):
        msg = "0-cochains of lengths %d and %d" % (len(x), len(x_prime))
        logger.error(msg)
        raise StructuralException(msg)
    return float(sum(np.dot(a, b) for a, b in zip(x.blocks(), x_prime.blocks())))


def inner_product_c1(y, y_prime):
    """Return <y, y'> in C^1."""

    if len(y) != len(y_prime):
        msg = "1-cochains of lengths %d and %d" % (len(y), len(y_prime))
        logger.error(msg)
        raise StructuralException(msg)
    return float(sum(np.dot(a, b) for a, b in zip(y.blocks(), y_prime.blocks())))


# Coboundary ##################################################################

def _oriented(sheaf, orientation):
    """Yield (edge index, first endpoint, second endpoint) per edge."""

    for k, e in enumerate(sheaf.edges):
        if orientation is None or e not in orientation:
            yield k, e[0], e[1]
        else:
            (i, j) = orientation[e]
            if normalize_edge(i, j) != e:
                msg = "Orientation %s does not match edge %s" % \
                      (str((i, j)), str(e))
                logger.error(msg)
                raise StructuralException(msg)
            yield k, i, j


def coboundary_apply(sheaf, x, orientation=None):
    """Apply the coboundary operator blockwise.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      x (Cochain0 or array):
        The 0-cochain.
      orientation (dict, optional):
        Maps canonical edges to the ordered pair (i, j) giving the sign
        convention (delta x)_ij = F_i x_i - F_j x_j. Missing edges keep the
        canonical (min, max) orientation.

    Returns (Cochain1):
      The image of x.
    """

    x = as_cochain0(sheaf, x)
    blocks = []
    for k, i, j in _oriented(sheaf, orientation):
        e = sheaf.edges[k]
        blocks.append(sheaf.restriction(i, e).dot(x.block(i)) -
                      sheaf.restriction(j, e).dot(x.block(j)))
    return Cochain1.from_blocks(sheaf, blocks)


def coboundary_matrix(sheaf, orientation=None):
    """Return the coboundary operator as a dense matrix.

    The block row of edge ij holds +F_i in column block i and -F_j in column
    block j.
    """

    if orientation is None:
        return np.array(sheaf.dense_coboundary())

    delta = np.zeros((sheaf.c1_dim, sheaf.c0_dim))
    for k, i, j in _oriented(sheaf, orientation):
        e = sheaf.edges[k]
        rows = sheaf.edge_slice(k)
        delta[rows, sheaf.vertex_slice(i)] = sheaf.restriction(i, e)
        delta[rows, sheaf.vertex_slice(j)] = -sheaf.restriction(j, e)
    return delta


# Laplacians ##################################################################

def linear_laplacian(sheaf):
    """Return L_F = delta^T delta as a dense symmetric matrix.

    The matrix is assembled from its blocks (diagonal blocks sum F_i^T F_i,
    off-diagonal blocks are -F_i^T F_j), so it is exactly symmetric and does
    not depend on edge orientation.
    """

    laplacian = np.zeros((sheaf.c0_dim, sheaf.c0_dim))
    for (a, b) in sheaf.edges:
        fa = sheaf.restriction(a, (a, b))
        fb = sheaf.restriction(b, (a, b))
        sa, sb = sheaf.vertex_slice(a), sheaf.vertex_slice(b)
        laplacian[sa, sa] += fa.T.dot(fa)
        laplacian[sb, sb] += fb.T.dot(fb)
        off = fa.T.dot(fb)
        laplacian[sa, sb] -= off
        laplacian[sb, sa] -= off.T
    return laplacian


def _local_block(sheaf, potentials, i, value_of):
    """Block i of the nonlinear Laplacian, reading stalk values through
    value_of(j). The summation order (sorted neighbors) is fixed."""

    acc = np.zeros(sheaf.vertex_dims[i])
    for j in sheaf.graph.neighbors(i):
        e = normalize_edge(i, j)
        (a, b) = e
        fa = sheaf.restriction(a, e)
        fb = sheaf.restriction(b, e)
        y = fa.dot(value_of(a)) - fb.dot(value_of(b))
        g = potentials.gradient_on(e, y)
        if i == a:
            acc = acc + fa.T.dot(g)
        else:
            acc = acc - fb.T.dot(g)
    return acc


def local_laplacian_block(sheaf, potentials, i, x_local):
    """Evaluate block i of the nonlinear sheaf Laplacian from local data.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      i (int):
        The vertex.
      x_local (dict):
        Maps i and each of its neighbors to a stalk vector. The values may be
        stale; the computation only uses what it is given.

    Returns (numpy.ndarray):
      sum_{j in N_i} F_i^T grad U_ij(F_i x_i - F_j x_j), with the sign fixed by
      the canonical orientation of each edge.

    Raises:
      ConfigurationException:
        If a value for i or a neighbor is missing.
    """

    for j in [i] + sheaf.graph.neighbors(i):
        if j not in x_local:
            msg = "No value for vertex %d in the neighborhood of %d" % (j, i)
            logger.error(msg)
            raise ConfigurationException(msg)

    return _local_block(sheaf, potentials, i,
                        lambda j: np.asarray(x_local[j], dtype=float))


def assemble_gradient(sheaf, potentials, values):
    """Return the flat nonlinear Laplacian of the flat 0-cochain values,
    assembled from local blocks."""

    offsets = sheaf.vertex_offsets
    value_of = lambda j: values[offsets[j]:offsets[j + 1]]
    return np.concatenate([_local_block(sheaf, potentials, i, value_of)
                           for i in range(sheaf.vertex_count)])


def nonlinear_laplacian_apply(sheaf, potentials, x):
    """Apply L_F^{grad U} = delta^T o grad U o delta to x.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials; they must cover every edge.
      x (Cochain0 or array):
        The 0-cochain.

    Returns (Cochain0):
      The gradient of the Dirichlet energy at x.

    Raises:
      ConfigurationException:
        If an edge has no potential.
    """

    x = as_cochain0(sheaf, x)
    potentials.check_covers(sheaf)
    return Cochain0(sheaf, assemble_gradient(sheaf, potentials, x.values))


# Sections ####################################################################

class SectionBasis(object):
    """Orthonormal basis of the global sections H^0 = ker delta.

    Attributes:
      matrix (numpy.ndarray):
        A c0_dim x h matrix with orthonormal columns.
      rank_tolerance (float):
        Relative cutoff used to decide the numerical kernel.
      coboundary_rank (int):
        The numerical rank of the coboundary operator.
    """

    def __init__(self, sheaf, matrix, rank_tolerance, coboundary_rank):
        self.sheaf = sheaf
        self.matrix = np.array(matrix, dtype=float).reshape(sheaf.c0_dim, -1)
        self.matrix.setflags(write=False)
        self.rank_tolerance = rank_tolerance
        self.coboundary_rank = coboundary_rank

    @property
    def dim(self):
        return self.matrix.shape[1]

    def vectors(self):
        return [Cochain0(self.sheaf, self.matrix[:, k]) for k in range(self.dim)]

    def project(self, x):
        """Orthogonal projection of x onto the span of the basis."""

        x = as_cochain0(self.sheaf, x)
        return Cochain0(self.sheaf, self.project_values(x.values))

    def project_values(self, values):
        return self.matrix.dot(self.matrix.T.dot(values))

    def __len__(self):
        return self.dim


def _svd(matrix):
    if matrix.size == 0:
        return (np.zeros((matrix.shape[0], matrix.shape[0])),
                np.zeros(0), np.eye(matrix.shape[1]))
    return scipy.linalg.svd(matrix, full_matrices=True)


def numerical_rank(singular_values, tol):
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > tol * singular_values[0]))


def global_sections(sheaf, tol=DEFAULT_RANK_TOLERANCE):
    """Compute an orthonormal basis of the global sections.

    Right singular vectors of the coboundary matrix whose singular value is at
    most tol * sigma_max span the numerical kernel.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      tol (float, optional):
        The relative rank tolerance, > 0.

    Returns (SectionBasis):
      The basis; its size is dim H^0.
    """

    if tol <= 0:
        msg = "Rank tolerance must be positive"
        logger.error(msg)
        raise ConfigurationException(msg)

    _, s, vt = _svd(sheaf.dense_coboundary())
    rank = numerical_rank(s, tol)
    return SectionBasis(sheaf, vt[rank:].T, tol, rank)


def cohomology_dims(sheaf, tol=DEFAULT_RANK_TOLERANCE):
    """Return (dim H^0, dim H^1) of the sheaf.

    dim H^0 = dim ker delta and dim H^1 = dim C^1 - rank delta.
    """

    basis = global_sections(sheaf, tol)
    return basis.dim, sheaf.c1_dim - basis.coboundary_rank


def least_squares(matrix, rhs, tol=DEFAULT_RANK_TOLERANCE):
    """Minimum-norm least-squares solution through a truncated SVD.

    Uses the same relative rank cutoff as global_sections.

    Returns:
      (solution, residual) where residual = rhs - matrix.solution.
    """

    u, s, vt = _svd(matrix)
    rank = numerical_rank(s, tol)
    coeffs = u[:, :rank].T.dot(rhs) / s[:rank]
    solution = vt[:rank].T.dot(coeffs)
    residual = rhs - u[:, :rank].dot(u[:, :rank].T.dot(rhs))
    return solution, residual
