import csv
import os
import zlib

import numpy as np
import scipy.stats

from execo_engine import logger

from sheaf_diffusion.objects import ConfigurationException


# Seeds #######################################################################

STREAMS = {
    "graph": 1,
    "sheaf": 2,
    "schedule": 3,
    "init": 4,
    "potentials": 5
}


def _key_int(key):
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(master, stream, *keys):
    """Derive an independent seed for one random stream.

    The seed only depends on the master seed, the stream name and the keys, so
    adding trials or instances never changes the seeds of other streams.

    Args:
      master (int):
        The master seed.
      stream (str):
        One of the names in STREAMS.
      *keys:
        Integers or strings identifying the consumer (trial, B, kind...).

    Returns (int):
      A 32-bit seed.
    """

    if stream not in STREAMS:
        msg = "Unknown random stream '%s'" % str(stream)
        logger.error(msg)
        raise ConfigurationException(msg)
    entropy = [_key_int(master), STREAMS[stream]] + [_key_int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


# Parsing #####################################################################

def parse_list(value, cast=str):
    """Parse a comma separated list, e.g. "0, 10, 50"."""

    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    parts = [v.strip() for v in str(value).split(",")]
    try:
        return [cast(v) for v in parts if v]
    except ValueError:
        msg = "Cannot parse list '%s'" % str(value)
        logger.error(msg)
        raise ConfigurationException(msg)


def parse_bool(value):
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    msg = "Cannot parse boolean '%s'" % str(value)
    logger.error(msg)
    raise ConfigurationException(msg)


def geometric_grid(max_exponent):
    """Return [0, 1, 2, 4, ..., 2^max_exponent]."""

    return [0] + [2 ** k for k in range(max_exponent + 1)]


# Output files ################################################################

def ensure_dir(path):
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path


def format_value(value):
    """Format a value for key-value and CSV files; floats use repr so that
    they round-trip exactly."""

    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_props(f, items):
    """Write (name, value) pairs as a tab separated key-value file."""

    ensure_dir(os.path.dirname(f))
    with open(f, "w") as out_file:
        for name, value in items:
            out_file.write(name + "\t" + format_value(value) + "\n")


def __parse_props_line(line):
    if line.startswith("#"):
        return None, None
    parts = line.rstrip("\n").split("\t", 1)
    if len(parts) == 2 and parts[0]:
        return parts[0], parts[1]
    return None, None


def read_props(f):
    params = {}
    with open(f) as in_file:
        for line in in_file:
            (pname, pvalue) = __parse_props_line(line)
            if pname:
                params[pname] = pvalue
    return params


def write_csv(f, header, rows):
    """Write rows under header as CSV, values formatted with format_value."""

    ensure_dir(os.path.dirname(f))
    with open(f, "w", newline="") as out_file:
        writer = csv.writer(out_file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(f):
    """Return the rows of a CSV file as dictionaries of strings."""

    with open(f, newline="") as in_file:
        return list(csv.DictReader(in_file))


# Statistics ##################################################################

def spearman(xs, ys):
    """Spearman rank correlation, None with fewer than 3 points or when it is
    undefined (constant input)."""

    if len(xs) != len(ys) or len(xs) < 3:
        return None
    rho = scipy.stats.spearmanr(xs, ys)[0]
    if rho is None or not np.isfinite(rho):
        return None
    return float(rho)


def median_iqr(values):
    """Return (median, first quartile, third quartile), or Nones when empty."""

    values = [v for v in values if v is not None and np.isfinite(v)]
    if not values:
        return None, None, None
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return float(median), float(q1), float(q3)
