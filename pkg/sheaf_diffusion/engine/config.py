"""Experiment configuration documents.

A configuration is a document with the sections [experiment], [graph],
[sheaf], [potentials], [schedule], [run] and [output], written as TOML
(".toml"), JSON (".json") or INI (any other extension). Values are resolved in
this order, later ones winning: built-in defaults, per-experiment defaults,
the configuration file, "section.key=value" overrides and dedicated flags.
Comma separated values denote lists. In TOML and JSON documents lists may
also be written as arrays, and lists of vectors (graph.edges,
potentials.displacements) as arrays of arrays.
"""

import json
import os
from configparser import ConfigParser, Error as ConfigParserError

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from execo_engine import logger

from sheaf_diffusion.diffusion import StepSizePolicy, StoppingRule
from sheaf_diffusion.generators import EXPLICIT, GeneratorConfig
from sheaf_diffusion.objects import ConfigurationException, \
    ParameterException
from sheaf_diffusion.util import geometric_grid, parse_bool, parse_list


EXPERIMENT_IDS = ("exp1", "exp2", "exp3", "exp4", "uav", "custom")

FILE_GRAPH = "file"

FULL_GRID_EXPONENT = 15

DEFAULT_DISPLACEMENTS = "1,0,0; 0,1,0; -1,0,0; 0,-1,0"

DEFAULTS = {
    "experiment": {"id": "custom",
                   "seed": "0",
                   "trials": "1",
                   "instances": "40",
                   "average_distances": "false",
                   "trend_threshold": "0.5"},
    "graph": {"kind": "regular",
              "n": "20",
              "k": "4",
              "p": "0.3",
              "edges": "",
              "path": ""},
    "sheaf": {"kind": "constant",
              "dim": "4",
              "vertex_dim": "4",
              "edge_dim": "1",
              "pd_probability": "0.2"},
    "potentials": {"kind": "quadratic",
                   "offset_mode": "image",
                   "offset_scale": "1.0",
                   "weight": "1.0",
                   "displacements": DEFAULT_DISPLACEMENTS},
    "schedule": {"B": "0",
                 "max_exponent": "10",
                 "mixture_std_ratio": "0.1"},
    "run": {"max_ticks": "100000",
            "scale_max_ticks": "false",
            "residual_tol": "1e-08",
            "record_every": "1",
            "step_mode": "lipschitz",
            "gamma": "",
            "safety": "0.9",
            "max_halvings": "20",
            "variance": "10"},
    "output": {"dir": "out",
               "traces": "true",
               "gnuplot": "false"}
}

EXPERIMENT_DEFAULTS = {
    "exp1": {"sheaf": {"kind": "constant,random_restriction,matrix_weighted"},
             "schedule": {"B": "0,10,50,200"},
             "run": {"scale_max_ticks": "true",
                     "record_every": "10"}},
    "exp2": {"experiment": {"trials": "100"},
             "sheaf": {"kind": "random_restriction"},
             "schedule": {"B": "50"},
             "run": {"record_every": "10"}},
    "exp3": {"experiment": {"trials": "3"},
             "sheaf": {"kind": "random_restriction"},
             "schedule": {"B": ""},
             "run": {"residual_tol": "1e-10",
                     "record_every": "100",
                     "max_ticks": "20000",
                     "scale_max_ticks": "true"}},
    "exp4": {"experiment": {"instances": "30"},
             "graph": {"kind": "erdos_renyi"},
             "sheaf": {"kind": "random_restriction"},
             "schedule": {"B": "50"},
             "run": {"record_every": "10"}},
    "uav": {"graph": {"kind": "explicit"},
            "potentials": {"kind": "offset_quadratic"},
            "schedule": {"B": "20"}},
    "custom": {}
}


def _fail(msg, exception=ConfigurationException):
    logger.error(msg)
    raise exception(msg)


def _new_parser():
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    return parser


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        if any(isinstance(v, (list, tuple)) for v in value):
            return "; ".join(_format_value(v) for v in value)
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, dict):
        raise ValueError("nested tables are not supported")
    return str(value)


def _read_structured(config_file, load):
    with open(config_file, "rb") as in_file:
        doc = load(in_file)
    if not isinstance(doc, dict):
        raise ValueError("the top level must be a table of sections")
    sections = {}
    for section, items in doc.items():
        if not isinstance(items, dict):
            raise ValueError("section %s must be a table" % section)
        sections[section] = dict((key, _format_value(value))
                                 for key, value in items.items())
    return sections


def _read_ini(config_file):
    parser = _new_parser()
    with open(config_file) as in_file:
        parser.read_file(in_file)
    return dict((section, dict(parser.items(section)))
                for section in parser.sections())


def read_config_file(config_file):
    """Read a configuration document into {section: {key: string}}.

    The format follows the extension: ".toml" and ".json" are parsed as
    such, anything else as INI. Numbers and booleans become their string
    form, arrays become comma separated lists.

    Raises:
      ConfigurationException:
        If the file does not exist or cannot be parsed.
    """

    if not os.path.exists(config_file):
        _fail("Config file " + config_file + " does not exist")
    extension = os.path.splitext(config_file)[1].lower()
    try:
        if extension == ".toml":
            return _read_structured(config_file, tomllib.load)
        if extension == ".json":
            return _read_structured(config_file, json.load)
        return _read_ini(config_file)
    except (ConfigParserError, tomllib.TOMLDecodeError, ValueError, IOError,
            OSError) as e:
        _fail("Cannot read config file " + config_file + ": " + str(e))


def parse_override(text):
    """Split "section.key=value" into (section, key, value)."""

    if "=" not in text or "." not in text.split("=", 1)[0]:
        _fail("Override '%s' is not of the form section.key=value" % text)
    name, value = text.split("=", 1)
    section, key = name.strip().split(".", 1)
    return section.strip(), key.strip(), value.strip()


class ExperimentConfig(object):
    """The fully resolved configuration of an experiment run.

    Attributes:
      id (str):
        The experiment id, one of EXPERIMENT_IDS.
      config_file (str or None):
        The configuration file the values were read from.
    """

    def __init__(self, experiment_id=None, config_file=None, overrides=(),
                 seed=None, out=None, full_grid=False):
        """Resolve a configuration.

        Args:
          experiment_id (str, optional):
            The experiment; taken from the file's [experiment] id if omitted.
          config_file (str, optional):
            Path of a TOML, JSON or INI document.
          overrides (list of str, optional):
            "section.key=value" assignments.
          seed (int, optional):
            The master seed, overriding experiment.seed.
          out (str, optional):
            The output directory, overriding output.dir.
          full_grid (bool, optional):
            Extend the geometric B grid up to 2^15.

        Raises:
          ConfigurationException:
            If the file cannot be read, or a section, key or value is invalid.
        """

        file_sections = {}
        if config_file is not None:
            file_sections = read_config_file(config_file)

        if experiment_id is None:
            experiment_id = file_sections.get("experiment", {}).get("id")
        if experiment_id not in EXPERIMENT_IDS:
            _fail("Unknown experiment id '%s', expected one of %s" %
                  (str(experiment_id), ", ".join(EXPERIMENT_IDS)))

        self.id = experiment_id
        self.config_file = config_file

        self._parser = _new_parser()
        self._parser.read_dict(DEFAULTS)
        self._parser.read_dict(EXPERIMENT_DEFAULTS[experiment_id])

        for section, items in file_sections.items():
            for key, value in items.items():
                self.set(section, key, value)
        for text in overrides:
            self.set(*parse_override(text))

        self.set("experiment", "id", experiment_id)
        if seed is not None:
            self.set("experiment", "seed", str(seed))
        if out is not None:
            self.set("output", "dir", out)
        if full_grid:
            self.set("schedule", "max_exponent", str(FULL_GRID_EXPONENT))

        self.validate()

    @classmethod
    def from_dict(cls, doc):
        """Rebuild a configuration from the output of to_dict."""

        overrides = ["%s.%s=%s" % (section, key, value)
                     for section, items in sorted(doc.items())
                     for key, value in sorted(items.items())]
        return cls(doc["experiment"]["id"], overrides=overrides)

    def set(self, section, key, value):
        if section not in DEFAULTS:
            _fail("Unknown config section [%s]" % section)
        if key not in DEFAULTS[section]:
            _fail("Unknown config key %s.%s" % (section, key))
        self._parser.set(section, key, str(value))

    def get(self, section, key):
        return self._parser.get(section, key)

    def get_int(self, section, key):
        try:
            return self._parser.getint(section, key)
        except ValueError:
            _fail("%s.%s must be an integer, got '%s'" %
                  (section, key, self.get(section, key)), ParameterException)

    def get_float(self, section, key):
        try:
            return self._parser.getfloat(section, key)
        except ValueError:
            _fail("%s.%s must be a number, got '%s'" %
                  (section, key, self.get(section, key)), ParameterException)

    def get_bool(self, section, key):
        return parse_bool(self.get(section, key))

    def get_list(self, section, key, cast=str):
        return parse_list(self.get(section, key), cast)

    # Typed views #############################################################

    @property
    def seed(self):
        return self.get_int("experiment", "seed")

    @property
    def trials(self):
        return self.get_int("experiment", "trials")

    @property
    def instances(self):
        return self.get_int("experiment", "instances")

    @property
    def average_distances(self):
        return self.get_bool("experiment", "average_distances")

    @property
    def trend_threshold(self):
        return self.get_float("experiment", "trend_threshold")

    @property
    def sheaf_kinds(self):
        return self.get_list("sheaf", "kind")

    @property
    def sheaf_path(self):
        """The sheaf document to load when graph.kind is "file"."""

        if self.get("graph", "kind") == FILE_GRAPH:
            return self.get("graph", "path")
        return None

    @property
    def B_values(self):
        """The delay bounds; an empty schedule.B means the geometric grid
        0, 1, 2, ..., 2^max_exponent."""

        values = self.get_list("schedule", "B", int)
        if not values:
            values = geometric_grid(self.get_int("schedule", "max_exponent"))
        return values

    @property
    def std_ratio(self):
        return self.get_float("schedule", "mixture_std_ratio")

    @property
    def variance(self):
        return self.get_float("run", "variance")

    @property
    def max_halvings(self):
        return self.get_int("run", "max_halvings")

    @property
    def output_dir(self):
        return self.get("output", "dir")

    @property
    def traces(self):
        return self.get_bool("output", "traces")

    @property
    def gnuplot(self):
        return self.get_bool("output", "gnuplot")

    @property
    def potentials_kind(self):
        return self.get("potentials", "kind")

    @property
    def offset_mode(self):
        return self.get("potentials", "offset_mode")

    @property
    def offset_scale(self):
        return self.get_float("potentials", "offset_scale")

    @property
    def potential_weight(self):
        return self.get_float("potentials", "weight")

    @property
    def displacements(self):
        """Four displacement vectors, written "x,y,z; x,y,z; ..."."""

        vectors = [parse_list(part, float) for part in
                   self.get("potentials", "displacements").split(";")
                   if part.strip()]
        if len(vectors) != 4 or any(len(v) != 3 for v in vectors):
            _fail("potentials.displacements needs four 3-vectors")
        return vectors

    def generator(self, sheaf_kind=None):
        """The GeneratorConfig for one sheaf kind (the first by default)."""

        edges = []
        for part in self.get("graph", "edges").split(";"):
            if part.strip():
                edges.append(tuple(parse_list(part, int)))
        return GeneratorConfig(
            graph_kind=EXPLICIT if self.sheaf_path is not None
            else self.get("graph", "kind"),
            n=self.get_int("graph", "n"),
            k=self.get_int("graph", "k"),
            p=self.get_float("graph", "p"),
            edges=edges,
            sheaf_kind=sheaf_kind or self.sheaf_kinds[0],
            dim=self.get_int("sheaf", "dim"),
            vertex_dim=self.get_int("sheaf", "vertex_dim"),
            edge_dim=self.get_int("sheaf", "edge_dim"),
            pd_probability=self.get_float("sheaf", "pd_probability"))

    def policy(self):
        gamma = self.get("run", "gamma")
        return StepSizePolicy(self.get("run", "step_mode"),
                              float(gamma) if gamma else None,
                              self.get_float("run", "safety"))

    def stop(self, B=0):
        """The stopping rule for delay bound B; with run.scale_max_ticks the
        tick limit is max_ticks * (B + 1)."""

        max_ticks = self.get_int("run", "max_ticks")
        if self.get_bool("run", "scale_max_ticks"):
            max_ticks *= B + 1
        return StoppingRule(max_ticks, self.get_float("run", "residual_tol"),
                            self.get_int("run", "record_every"))

    def validate(self):
        """Check every value once so that runs fail before they start.

        Raises:
          ConfigurationException:
            On the first invalid value.
        """

        if self.trials < 1:
            _fail("experiment.trials must be at least 1", ParameterException)
        if self.instances < 1:
            _fail("experiment.instances must be at least 1",
                  ParameterException)
        if not self.B_values or any(B < 0 for B in self.B_values):
            _fail("schedule.B must list non-negative integers",
                  ParameterException)
        if self.get_int("schedule", "max_exponent") < 0:
            _fail("schedule.max_exponent must be non-negative",
                  ParameterException)
        if not self.sheaf_kinds:
            _fail("sheaf.kind must name at least one sheaf kind")
        if self.sheaf_path is not None:
            if not os.path.exists(self.sheaf_path):
                _fail("Sheaf document '%s' does not exist" % self.sheaf_path)
        else:
            for kind in self.sheaf_kinds:
                self.generator(kind)
        if not self.variance > 0:
            _fail("run.variance must be positive", ParameterException)
        if self.max_halvings < 0:
            _fail("run.max_halvings must be non-negative", ParameterException)
        self.policy()
        self.stop()
        self.average_distances
        self.traces
        self.gnuplot
        if self.id == "uav":
            self.displacements
        if not self.output_dir:
            _fail("output.dir must not be empty")

    def to_dict(self):
        """Every resolved value, as {section: {key: string}}."""

        return dict((section, dict(self._parser.items(section)))
                    for section in self._parser.sections())

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and \
            self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other
