"""JSON documents for sheaves, potentials and run results.

A sheaf document looks like::

    {"version": 1,
     "vertices": [2, 2, 2],
     "edges": [{"pair": [0, 1], "dim": 1}, {"pair": [1, 2], "dim": 1}],
     "restrictions": {"0|0-1": [[1.0, 0.0]], "1|0-1": [[0.0, 1.0]], ...},
     "potentials": {"0-1": {"kind": "quadratic"},
                    "1-2": {"kind": "offset_quadratic", "offset": [0.5]}}}

Floats are written with their shortest round-trip representation, so loading
a saved document gives back exactly the same matrices.
"""

import json
import os

import numpy as np

from execo_engine import logger

from sheaf_diffusion.objects import CellularSheaf, ConfigurationException, \
    Graph, SheafException, StructuralException
from sheaf_diffusion.potentials import PotentialSet, potential_from_dict
from sheaf_diffusion.util import ensure_dir


DOCUMENT_VERSION = 1


def _edge_key(e):
    return "%d-%d" % e


def _parse_edge_key(key):
    try:
        a, b = key.split("-")
        return int(a), int(b)
    except ValueError:
        msg = "Malformed edge key '%s'" % key
        logger.error(msg)
        raise StructuralException(msg)


def sheaf_to_dict(sheaf, potentials=None):
    """Return the JSON-ready document of a sheaf and optional potentials."""

    doc = {
        "version": DOCUMENT_VERSION,
        "vertices": list(sheaf.vertex_dims),
        "edges": [{"pair": list(e), "dim": d}
                  for e, d in zip(sheaf.edges, sheaf.edge_dims)],
        "restrictions": dict(
            ("%d|%s" % (v, _edge_key(e)), m.tolist())
            for (v, e), m in sorted(sheaf.restrictions().items()))
    }
    if potentials is not None:
        potentials.check_covers(sheaf)
        doc["potentials"] = potentials.to_dict()
    return doc


def sheaf_from_dict(doc):
    """Rebuild (sheaf, potentials) from a document; potentials is None when
    the document has none.

    Raises:
      StructuralException:
        If the document is malformed.
    """

    try:
        version = doc.get("version", DOCUMENT_VERSION)
        if version != DOCUMENT_VERSION:
            msg = "Unsupported sheaf document version %s" % str(version)
            logger.error(msg)
            raise StructuralException(msg)

        vertex_dims = doc["vertices"]
        edges = [tuple(item["pair"]) for item in doc["edges"]]
        edge_dims = [item["dim"] for item in doc["edges"]]
        restrictions = {}
        for key, matrix in doc["restrictions"].items():
            v, e = key.split("|")
            restrictions[int(v), _parse_edge_key(e)] = \
                np.array(matrix, dtype=float).reshape(-1, vertex_dims[int(v)])
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        msg = "Malformed sheaf document: " + str(e)
        logger.error(msg)
        raise StructuralException(msg)

    graph = Graph(len(vertex_dims), edges)
    sheaf = CellularSheaf(graph, vertex_dims, edge_dims, restrictions)

    potentials = None
    if "potentials" in doc:
        potentials = PotentialSet(dict(
            (_parse_edge_key(key), potential_from_dict(p))
            for key, p in doc["potentials"].items()))
        potentials.check_covers(sheaf)

    return sheaf, potentials


def write_json(f, doc):
    ensure_dir(os.path.dirname(f))
    with open(f, "w") as out_file:
        json.dump(doc, out_file, indent=1, sort_keys=True)
        out_file.write("\n")


def read_json(f):
    """Read a JSON document.

    Raises:
      ConfigurationException:
        If the file cannot be read or parsed.
    """

    try:
        with open(f) as in_file:
            return json.load(in_file)
    except (IOError, OSError, ValueError) as e:
        msg = "Cannot read " + f + ": " + str(e)
        logger.error(msg)
        raise ConfigurationException(msg)


def save_sheaf(f, sheaf, potentials=None):
    """Serialize the sheaf (and potentials) into file f."""

    logger.debug("Serialize sheaf in " + f)
    write_json(f, sheaf_to_dict(sheaf, potentials))


def load_sheaf(f):
    """Return (sheaf, potentials) from file f."""

    logger.debug("Deserialize sheaf from " + f)
    doc = read_json(f)
    if not isinstance(doc, dict):
        msg = f + " is not a sheaf document"
        logger.error(msg)
        raise StructuralException(msg)
    try:
        return sheaf_from_dict(doc)
    except SheafException:
        logger.error("Invalid sheaf document " + f)
        raise
