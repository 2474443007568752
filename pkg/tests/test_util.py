import os

import pytest

from sheaf_diffusion.objects import ConfigurationException
from sheaf_diffusion.util import derive_seed, format_value, geometric_grid, \
    median_iqr, parse_bool, parse_list, read_csv, read_props, \
    spearman, write_csv, write_props


def test_derive_seed_is_stable():
    assert derive_seed(7, "init", 3) == derive_seed(7, "init", 3)
    assert 0 <= derive_seed(7, "init", 3) < 2 ** 32


def test_derive_seed_separates_streams_and_keys():
    seeds = set([derive_seed(7, "init", 3), derive_seed(7, "schedule", 3),
                 derive_seed(7, "init", 4), derive_seed(8, "init", 3),
                 derive_seed(7, "init", "constant")])
    assert len(seeds) == 5


def test_derive_seed_unknown_stream():
    with pytest.raises(ConfigurationException):
        derive_seed(0, "noise")


def test_parse_list():
    assert parse_list("0, 10,50", int) == [0, 10, 50]
    assert parse_list("", int) == []
    assert parse_list([1, 2], float) == [1.0, 2.0]
    with pytest.raises(ConfigurationException):
        parse_list("1, two", int)


def test_parse_bool():
    assert parse_bool("Yes") is True
    assert parse_bool("off") is False
    assert parse_bool(True) is True
    with pytest.raises(ConfigurationException):
        parse_bool("maybe")


def test_geometric_grid():
    assert geometric_grid(3) == [0, 1, 2, 4, 8]
    assert geometric_grid(0) == [0, 1]


def test_format_value():
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(0.1) == "0.1"
    assert float(format_value(1 / 3.0)) == 1 / 3.0
    assert format_value(12) == "12"


def test_props_round_trip(tmp_path):
    f = str(tmp_path / "stats.txt")
    write_props(f, [("count", 3), ("rho", 0.5), ("missing", None)])
    assert read_props(f) == {"count": "3", "rho": "0.5", "missing": ""}


def test_csv_round_trip(tmp_path):
    f = str(tmp_path / "nested" / "table.csv")
    write_csv(f, ("B", "distance"), [[0, 0.25], [1, None]])
    assert os.path.exists(f)
    assert read_csv(f) == [{"B": "0", "distance": "0.25"},
                           {"B": "1", "distance": ""}]


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2], [1, 2]) is None


def test_median_iqr():
    assert median_iqr([1.0, 2.0, 3.0, 4.0, 5.0]) == (3.0, 2.0, 4.0)
    assert median_iqr([]) == (None, None, None)
    assert median_iqr([None, 2.0]) == (2.0, 2.0, 2.0)

