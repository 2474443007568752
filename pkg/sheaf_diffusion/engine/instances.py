import os

from abc import ABCMeta, abstractmethod

from execo_engine import logger

from sheaf_diffusion.generators import OFFSETS_IN_IMAGE, \
    gaussian_initial_condition, offset_potentials, uav_formation_sheaf
from sheaf_diffusion.objects import ConfigurationException
from sheaf_diffusion.potentials import OFFSET_QUADRATIC, QUADRATIC, \
    SCALED_QUADRATIC, PotentialSet, ScaledQuadraticPotential, energy_minimum
from sheaf_diffusion.serialization import load_sheaf
from sheaf_diffusion.spectral import spectrum


def make_potentials(sheaf, kind=QUADRATIC, seed=0, offset_mode=OFFSETS_IN_IMAGE,
                    offset_scale=1.0, weight=1.0):
    """Build the same kind of potential on every edge of a sheaf.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      kind (str, optional):
        quadratic, offset_quadratic or scaled_quadratic.
      seed (int, optional):
        Seed of the random offsets.
      offset_mode (str, optional):
        Where offsets are drawn, see offset_potentials.
      offset_scale (float, optional):
        Scale of the offsets.
      weight (float, optional):
        Weight of scaled_quadratic potentials.

    Returns (PotentialSet):
      The potentials.
    """

    if kind == QUADRATIC:
        return PotentialSet.quadratic(sheaf)
    elif kind == OFFSET_QUADRATIC:
        return offset_potentials(sheaf, seed, offset_mode, offset_scale)
    elif kind == SCALED_QUADRATIC:
        return PotentialSet(dict((e, ScaledQuadraticPotential(weight))
                                 for e in sheaf.edges))
    msg = "Unknown potential kind '%s'" % str(kind)
    logger.error(msg)
    raise ConfigurationException(msg)


class Instance(object, metaclass=ABCMeta):
    """This class defines a coordination problem an experiment runs on: a
    sheaf, its potentials and the quantities derived from them.

    The sheaf is only built on first access; the spectrum and the minimizer
    set are computed once and shared by every run on the instance.
    """

    def __init__(self, label):
        self.label = label
        self._built = None
        self._report = None
        self._minimum = None

    @abstractmethod
    def build(self):
        """Return (sheaf, potentials, weights); weights is None unless the
        sheaf is matrix-weighted."""
        pass

    def _get(self):
        if self._built is None:
            self._built = self.build()
            logger.debug("Built instance " + self.label + ": " +
                         str(self._built[0]))
        return self._built

    @property
    def sheaf(self):
        return self._get()[0]

    @property
    def potentials(self):
        return self._get()[1]

    @property
    def weights(self):
        return self._get()[2]

    @property
    def report(self):
        if self._report is None:
            self._report = spectrum(self.sheaf)
        return self._report

    @property
    def minimum(self):
        """The minimizer set, None for potentials outside the quadratic
        family."""

        if self._minimum is None and self.potentials.quadratic_family:
            self._minimum = energy_minimum(self.sheaf, self.potentials)
        return self._minimum

    def initial_condition(self, variance, seed):
        return gaussian_initial_condition(self.sheaf, variance, seed)

    def to_dict(self):
        return {"label": self.label}


class GeneratedInstance(Instance):
    """An instance drawn from a GeneratorConfig with explicit seeds."""

    def __init__(self, generator, graph_seed, sheaf_seed, potentials_seed=0,
                 potentials_kind=QUADRATIC, offset_mode=OFFSETS_IN_IMAGE,
                 offset_scale=1.0, weight=1.0, label=None):
        super(GeneratedInstance, self).__init__(
            label or generator.sheaf_kind)
        self.generator = generator
        self.graph_seed = graph_seed
        self.sheaf_seed = sheaf_seed
        self.potentials_seed = potentials_seed
        self.potentials_kind = potentials_kind
        self.offset_mode = offset_mode
        self.offset_scale = offset_scale
        self.weight = weight

    def build(self):
        graph = self.generator.make_graph(self.graph_seed)
        sheaf, weights = self.generator.make_sheaf(graph, self.sheaf_seed)
        potentials = make_potentials(sheaf, self.potentials_kind,
                                     self.potentials_seed, self.offset_mode,
                                     self.offset_scale, self.weight)
        return sheaf, potentials, weights

    def to_dict(self):
        doc = super(GeneratedInstance, self).to_dict()
        doc.update({"generator": self.generator.to_dict(),
                    "graph_seed": self.graph_seed,
                    "sheaf_seed": self.sheaf_seed,
                    "potentials_seed": self.potentials_seed,
                    "potentials_kind": self.potentials_kind})
        return doc


class LoadedInstance(Instance):
    """An instance read from a JSON sheaf document. Documents without
    potentials get quadratic potentials on every edge."""

    def __init__(self, path, label=None):
        if not os.path.exists(path):
            msg = "The sheaf document " + path + " does not exist"
            logger.error(msg)
            raise ConfigurationException(msg)
        super(LoadedInstance, self).__init__(
            label or os.path.splitext(os.path.basename(path))[0])
        self.path = path

    def build(self):
        sheaf, potentials = load_sheaf(self.path)
        if potentials is None:
            potentials = PotentialSet.quadratic(sheaf)
        return sheaf, potentials, None

    def to_dict(self):
        doc = super(LoadedInstance, self).to_dict()
        doc["path"] = self.path
        return doc


class UavInstance(Instance):
    """The two-formation UAV coordination sheaf."""

    def __init__(self, displacements, label="uav"):
        super(UavInstance, self).__init__(label)
        self.displacements = [list(map(float, d)) for d in displacements]

    def build(self):
        sheaf, potentials = uav_formation_sheaf(self.displacements)
        return sheaf, potentials, None

    def to_dict(self):
        doc = super(UavInstance, self).to_dict()
        doc["displacements"] = self.displacements
        return doc
