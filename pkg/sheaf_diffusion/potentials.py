"""Edge potentials, the global potential and the Dirichlet energy."""

from abc import ABCMeta, abstractmethod

import numpy as np

from execo_engine import logger

from sheaf_diffusion.objects import Cochain0, ConfigurationException, \
    ParameterException, StructuralException, normalize_edge
from sheaf_diffusion.sheaf import DEFAULT_RANK_TOLERANCE, as_cochain0, \
    global_sections, least_squares


QUADRATIC = "quadratic"
OFFSET_QUADRATIC = "offset_quadratic"
SCALED_QUADRATIC = "scaled_quadratic"

DEFAULT_CONSISTENCY_TOL = 1e-9


class EdgePotential(object, metaclass=ABCMeta):
    """Abstract edge potential U_e: F(e) -> R.

    A potential carries its value, its gradient and the constants m_e
    (strong convexity) and K_e (smoothness) with 0 < m_e <= K_e.

    Attributes:
      kind (str):
        The registered name of the potential.
      offset (numpy.ndarray or None):
        The minimizer b_e of the potential, None when it is the origin.
    """

    kind = None
    quadratic_family = False

    def __init__(self, offset=None):
        if offset is not None:
            offset = np.array(offset, dtype=float).ravel()
            offset.setflags(write=False)
        self.offset = offset

    @property
    def dim(self):
        """The edge stalk dimension fixed by the offset, or None."""
        return None if self.offset is None else self.offset.shape[0]

    @property
    @abstractmethod
    def m(self):
        pass

    @property
    @abstractmethod
    def K(self):
        pass

    @property
    def weight(self):
        """The curvature of a quadratic-family potential."""
        return 1.0

    @abstractmethod
    def value(self, y):
        pass

    @abstractmethod
    def gradient(self, y):
        pass

    def minimizer(self, edge_dim):
        return np.zeros(edge_dim) if self.offset is None else self.offset

    def to_dict(self):
        doc = {"kind": self.kind}
        if self.offset is not None:
            doc["offset"] = [float(v) for v in self.offset]
        return doc

    def __eq__(self, other):
        return (type(self) is type(other) and
                self.to_dict() == other.to_dict())

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, self.to_dict())


class QuadraticPotential(EdgePotential):
    """U_e(y) = 1/2 |y|^2."""

    kind = QUADRATIC
    quadratic_family = True

    def __init__(self):
        super(QuadraticPotential, self).__init__()

    m = 1.0
    K = 1.0

    def value(self, y):
        return 0.5 * float(np.dot(y, y))

    def gradient(self, y):
        return y


class OffsetQuadraticPotential(EdgePotential):
    """U_e(y) = 1/2 |y - b_e|^2."""

    kind = OFFSET_QUADRATIC
    quadratic_family = True

    def __init__(self, offset):
        if offset is None:
            msg = "offset_quadratic potentials need an offset"
            logger.error(msg)
            raise ConfigurationException(msg)
        super(OffsetQuadraticPotential, self).__init__(offset)

    m = 1.0
    K = 1.0

    def value(self, y):
        d = y - self.offset
        return 0.5 * float(np.dot(d, d))

    def gradient(self, y):
        return y - self.offset


class ScaledQuadraticPotential(EdgePotential):
    """U_e(y) = w/2 |y - b_e|^2, with m_e = K_e = w.

    The offset is optional and defaults to the origin.
    """

    kind = SCALED_QUADRATIC
    quadratic_family = True

    def __init__(self, weight, offset=None):
        if not weight > 0:
            msg = "Potential weight must be positive, got %s" % str(weight)
            logger.error(msg)
            raise ParameterException(msg)
        super(ScaledQuadraticPotential, self).__init__(offset)
        self._weight = float(weight)

    @property
    def weight(self):
        return self._weight

    @property
    def m(self):
        return self._weight

    @property
    def K(self):
        return self._weight

    def value(self, y):
        d = y if self.offset is None else y - self.offset
        return 0.5 * self._weight * float(np.dot(d, d))

    def gradient(self, y):
        d = y if self.offset is None else y - self.offset
        return self._weight * d

    def to_dict(self):
        doc = super(ScaledQuadraticPotential, self).to_dict()
        doc["weight"] = self._weight
        return doc


def make_potential(kind, offset=None, weight=None):
    """Build a built-in potential from its kind name.

    Raises:
      ConfigurationException:
        If the kind is unknown.
    """

    if kind == QUADRATIC:
        return QuadraticPotential()
    elif kind == OFFSET_QUADRATIC:
        return OffsetQuadraticPotential(offset)
    elif kind == SCALED_QUADRATIC:
        return ScaledQuadraticPotential(1.0 if weight is None else weight,
                                        offset)
    else:
        msg = "Unknown potential kind '%s'" % str(kind)
        logger.error(msg)
        raise ConfigurationException(msg)


def potential_from_dict(doc):
    return make_potential(doc.get("kind"), doc.get("offset"), doc.get("weight"))


def _check_shape(p, y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or (p.dim is not None and y.shape[0] != p.dim):
        msg = "Vector of shape %s does not fit %s" % (str(y.shape), repr(p))
        logger.error(msg)
        raise StructuralException(msg)
    return y


def potential_value(p, y):
    """Evaluate U_e(y).

    Raises:
      StructuralException:
        If y does not have the dimension of the potential's offset.
    """

    return p.value(_check_shape(p, y))


def potential_gradient(p, y):
    """Evaluate grad U_e(y)."""

    return np.array(p.gradient(_check_shape(p, y)), dtype=float)


class PotentialSet(object):
    """The global potential U: one edge potential per edge of a sheaf.

    Attributes:
      m (float):
        Global strong convexity constant, min_e m_e.
      K_max (float):
        max_e K_e.
    """

    def __init__(self, potentials):
        """Create a potential set.

        Args:
          potentials (dict):
            Maps edges (either orientation) to EdgePotential instances.
        """

        self._potentials = {}
        for e, p in potentials.items():
            e = normalize_edge(*e)
            if e in self._potentials:
                msg = "Two potentials given for edge %s" % str(e)
                logger.error(msg)
                raise ConfigurationException(msg)
            if not isinstance(p, EdgePotential):
                msg = "%s is not an edge potential" % repr(p)
                logger.error(msg)
                raise ConfigurationException(msg)
            self._potentials[e] = p

        if self._potentials:
            self.m = min(p.m for p in self._potentials.values())
            self.K_max = max(p.K for p in self._potentials.values())
            if not (self.m > 0 and self.m <= self.K_max):
                msg = "Potentials must satisfy 0 < m <= K"
                logger.error(msg)
                raise ParameterException(msg)
        else:
            self.m = 1.0
            self.K_max = 1.0

        self.quadratic_family = all(p.quadratic_family
                                    for p in self._potentials.values())
        self._covered = None
        self._terms = None

    @classmethod
    def quadratic(cls, sheaf):
        """All-quadratic potentials on every edge of the sheaf."""

        return cls(dict((e, QuadraticPotential()) for e in sheaf.edges))

    def __getitem__(self, e):
        return self._potentials[normalize_edge(*e)]

    def __contains__(self, e):
        return normalize_edge(*e) in self._potentials

    def __len__(self):
        return len(self._potentials)

    def items(self):
        return sorted(self._potentials.items())

    def edges(self):
        return sorted(self._potentials)

    def gradient_on(self, e, y):
        try:
            p = self._potentials[e]
        except KeyError:
            msg = "No potential on edge %s" % str(e)
            logger.error(msg)
            raise ConfigurationException(msg)
        return p.gradient(y)

    def value_on(self, e, y):
        try:
            p = self._potentials[e]
        except KeyError:
            msg = "No potential on edge %s" % str(e)
            logger.error(msg)
            raise ConfigurationException(msg)
        return p.value(y)

    def check_covers(self, sheaf):
        """Check that the potentials cover exactly the edges of the sheaf,
        with offsets of the right dimension.

        Raises:
          ConfigurationException:
            If an edge has no potential or a potential has no edge.
          StructuralException:
            If an offset does not fit its edge stalk.
        """

        if self._covered is sheaf:
            return

        missing = [e for e in sheaf.edges if e not in self._potentials]
        if missing:
            msg = "No potential on edges " + ", ".join(str(e) for e in missing)
            logger.error(msg)
            raise ConfigurationException(msg)
        if len(self._potentials) != len(sheaf.edges):
            extra = sorted(set(self._potentials) - set(sheaf.edges))
            msg = "Potentials on non-edges " + \
                  ", ".join(str(e) for e in extra)
            logger.error(msg)
            raise ConfigurationException(msg)
        for k, e in enumerate(sheaf.edges):
            dim = self._potentials[e].dim
            if dim is not None and dim != sheaf.edge_dims[k]:
                msg = "Offset on edge %s has dimension %d, stalk has %d" % \
                      (str(e), dim, sheaf.edge_dims[k])
                logger.error(msg)
                raise StructuralException(msg)

        self._covered = sheaf

    def offset_vector(self, sheaf):
        """Stack the edge minimizers b_e into a flat 1-cochain."""

        self.check_covers(sheaf)
        return np.concatenate(
            [self._potentials[e].minimizer(sheaf.edge_dims[k])
             for k, e in enumerate(sheaf.edges)]) \
            if sheaf.edges else np.zeros(0)

    def weight_vector(self, sheaf):
        """Per-entry curvature of a quadratic-family potential set."""

        self._check_quadratic_family()
        self.check_covers(sheaf)
        return np.concatenate(
            [np.repeat(self._potentials[e].weight, sheaf.edge_dims[k])
             for k, e in enumerate(sheaf.edges)]) \
            if sheaf.edges else np.zeros(0)

    def quadratic_terms(self, sheaf):
        """Return the cached (weight_vector, offset_vector) pair."""

        if self._terms is None or self._terms[0] is not sheaf:
            self._terms = (sheaf, self.weight_vector(sheaf),
                           self.offset_vector(sheaf))
        return self._terms[1], self._terms[2]

    def affine_gradient(self, sheaf):
        """For quadratic-family potentials the energy gradient is affine,
        grad f(x) = A x - c with A = delta^T W delta and c = delta^T W b.

        Returns:
          (A, c) as dense arrays.
        """

        delta = sheaf.dense_coboundary()
        w = self.weight_vector(sheaf)
        weighted = delta * w[:, np.newaxis]
        return delta.T.dot(weighted), weighted.T.dot(self.offset_vector(sheaf))

    def _check_quadratic_family(self):
        if not self.quadratic_family:
            kinds = sorted(set(p.kind for p in self._potentials.values()
                               if not p.quadratic_family))
            msg = "Unsupported potential kinds: " + ", ".join(map(str, kinds))
            logger.error(msg)
            raise ConfigurationException(msg)

    def to_dict(self):
        return dict(("%d-%d" % e, p.to_dict()) for e, p in self.items())

    def __eq__(self, other):
        return isinstance(other, PotentialSet) and \
            self._potentials == other._potentials

    def __ne__(self, other):
        return not self == other

    def __str__(self):
        return "PotentialSet(%d edges, m = %g, K_max = %g)" % \
               (len(self), self.m, self.K_max)


def dirichlet_energy(sheaf, potentials, x):
    """Evaluate the Dirichlet energy f(x) = sum_e U_e((delta x)_e).

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      x (Cochain0 or array):
        The 0-cochain.

    Returns (float):
      The energy.
    """

    x = as_cochain0(sheaf, x)
    potentials.check_covers(sheaf)
    return energy_of_values(sheaf, potentials, x.values)


def energy_of_values(sheaf, potentials, values):
    y = sheaf.dense_coboundary().dot(values)
    if potentials.quadratic_family:
        w, b = potentials.quadratic_terms(sheaf)
        r = y - b
        return 0.5 * float(np.dot(w * r, r))
    offsets = sheaf.edge_offsets
    return float(sum(potentials.value_on(e, y[offsets[k]:offsets[k + 1]])
                     for k, e in enumerate(sheaf.edges)))


class EnergyMinimum(object):
    """The minimum value and the minimizer set of a Dirichlet energy.

    The minimizer set is the affine subspace particular + span(basis). When
    the stacked offset lies outside the image of the coboundary, the set is the
    weighted least-squares characterization and consistent is False.

    Attributes:
      f_star (float):
        The minimum energy.
      particular (Cochain0):
        The minimum-norm minimizer.
      basis (SectionBasis):
        Orthonormal basis of the global sections.
      consistent (bool):
        Whether the offsets are realized exactly (f_star = 0).
    """

    def __init__(self, sheaf, f_star, particular, basis, consistent):
        self.sheaf = sheaf
        self.f_star = f_star
        self.particular = particular
        self.basis = basis
        self.consistent = consistent

    @property
    def characterization(self):
        return "exact" if self.consistent else "least_squares"

    def project_values(self, values):
        shifted = values - self.particular.values
        return self.particular.values + self.basis.project_values(shifted)

    def project(self, x):
        """Orthogonal projection of x onto the minimizer set."""

        x = as_cochain0(self.sheaf, x)
        return Cochain0(self.sheaf, self.project_values(x.values))

    def distance_values(self, values):
        return float(np.linalg.norm(values - self.project_values(values)))

    def distance(self, x):
        """Distance from x to the minimizer set."""

        x = as_cochain0(self.sheaf, x)
        return self.distance_values(x.values)


def energy_minimum(sheaf, potentials, tol=DEFAULT_RANK_TOLERANCE,
                   consistency_tol=DEFAULT_CONSISTENCY_TOL):
    """Compute f* and the minimizer set of a quadratic-family energy.

    The energy is 1/2 |W^(1/2)(delta x - b)|^2, minimized by weighted least
    squares with the rank tolerance of global_sections.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The potentials, all of the quadratic family.
      tol (float, optional):
        Relative rank tolerance.
      consistency_tol (float, optional):
        Relative residual below which b is considered in the image of delta.

    Returns (EnergyMinimum):
      The minimum and the minimizer set.

    Raises:
      ConfigurationException:
        If a potential is not of the quadratic family.
    """

    potentials.check_covers(sheaf)
    sqrt_w = np.sqrt(potentials.weight_vector(sheaf))
    b = potentials.offset_vector(sheaf)

    matrix = sheaf.dense_coboundary() * sqrt_w[:, np.newaxis]
    rhs = sqrt_w * b
    particular, residual = least_squares(matrix, rhs, tol)

    residual_norm = float(np.linalg.norm(residual))
    f_star = 0.5 * residual_norm ** 2
    consistent = residual_norm <= consistency_tol * max(1.0, float(np.linalg.norm(rhs)))
    if consistent:
        f_star = 0.0
    else:
        logger.warning("Edge offsets are not realizable, minimizer set is the "
                       "least-squares characterization (f* = %g)" % f_star)

    return EnergyMinimum(sheaf, f_star, Cochain0(sheaf, particular),
                         global_sections(sheaf, tol), consistent)
