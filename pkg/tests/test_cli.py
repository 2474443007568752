import os

import pytest

from sheaf_diffusion.cli import EXIT_DIVERGED, EXIT_ERROR, EXIT_OK, \
    EXIT_USAGE, cli_main
from sheaf_diffusion.serialization import load_sheaf


def props(text):
    return dict(line.split("\t", 1) for line in text.splitlines()
                if "\t" in line)


@pytest.fixture
def edge_file(tmp_path):
    path = str(tmp_path / "edge.json")
    assert cli_main(["generate", "--graph-kind", "explicit", "--n", "2",
                     "--edges", "0,1", "--sheaf-kind", "constant",
                     "--dim", "1", "--out", path]) == EXIT_OK
    return path


@pytest.fixture
def cycle_file(tmp_path):
    path = str(tmp_path / "cycle.json")
    assert cli_main(["generate", "--graph-kind", "explicit", "--n", "6",
                     "--edges", "0,1; 1,2; 2,3; 3,4; 4,5; 0,5",
                     "--dim", "1", "--out", path]) == EXIT_OK
    return path


def test_generate_writes_document(edge_file):
    sheaf, potentials = load_sheaf(edge_file)
    assert sheaf.graph.edges == ((0, 1),)
    assert len(potentials) == 1


def test_generate_to_standard_output(capsys):
    assert cli_main(["generate", "--n", "6", "--k", "2", "--dim", "2"]) == \
        EXIT_OK
    assert '"version": 1' in capsys.readouterr().out


def test_spectrum(edge_file, capsys):
    assert cli_main(["spectrum", edge_file]) == EXIT_OK
    values = props(capsys.readouterr().out)
    assert float(values["lambda_max"]) == pytest.approx(2.0)
    assert float(values["lambda_2"]) == pytest.approx(2.0)
    assert values["zero_multiplicity"] == "1"


def test_spectrum_eigenvalues_file(cycle_file, tmp_path, capsys):
    path = str(tmp_path / "eigenvalues.csv")
    assert cli_main(["spectrum", cycle_file, "--eigenvalues", path]) == \
        EXIT_OK
    with open(path) as f:
        assert len(f.read().splitlines()) == 7


def test_synchronous_and_zero_delay_traces_agree(cycle_file, tmp_path,
                                                 capsys):
    sync_trace = str(tmp_path / "sync.csv")
    async_trace = str(tmp_path / "async.csv")
    assert cli_main(["diffuse", cycle_file, "--sync", "--seed", "4",
                     "--trace", sync_trace]) == EXIT_OK
    assert cli_main(["diffuse", cycle_file, "--B", "0", "--seed", "4",
                     "--trace", async_trace]) == EXIT_OK
    with open(sync_trace) as f, open(async_trace) as g:
        assert f.read() == g.read()


def test_diffuse_prints_run(cycle_file, tmp_path, capsys):
    meta = str(tmp_path / "meta.json")
    assert cli_main(["diffuse", cycle_file, "--B", "3", "--step-mode",
                     "auto", "--meta", meta]) == EXIT_OK
    values = props(capsys.readouterr().out)
    assert values["converged"] == "true"
    assert values["B"] == "3"
    assert os.path.exists(meta)


def test_diffuse_needs_a_mode(cycle_file):
    assert cli_main(["diffuse", cycle_file]) == EXIT_USAGE


def test_usage_errors():
    assert cli_main([]) == EXIT_USAGE
    assert cli_main(["transmogrify"]) == EXIT_USAGE
    assert cli_main(["diffuse", "x.json", "--B", "many"]) == EXIT_USAGE


def test_missing_file(tmp_path):
    assert cli_main(["spectrum", str(tmp_path / "none.json")]) == EXIT_ERROR
    assert cli_main(["diffuse", str(tmp_path / "none.json"), "--sync"]) == \
        EXIT_ERROR


def test_invalid_parameters(cycle_file):
    assert cli_main(["diffuse", cycle_file, "--B", "-1"]) == EXIT_ERROR
    assert cli_main(["generate", "--n", "5", "--k", "3"]) == EXIT_ERROR


def test_divergence_exit_code(edge_file):
    assert cli_main(["diffuse", edge_file, "--sync", "--gamma", "100",
                     "--max-halvings", "0"]) == EXIT_DIVERGED


def test_experiment(tmp_path, capsys):
    config = tmp_path / "small.ini"
    config.write_text("[experiment]\nid = custom\n\n"
                      "[graph]\nn = 6\nk = 2\n\n"
                      "[sheaf]\nkind = constant\ndim = 1\n\n"
                      "[run]\nstep_mode = auto\n")
    out = tmp_path / "out"
    assert cli_main(["experiment", "--config", str(config), "--out",
                     str(out), "--B", "0,2", "--trials", "1",
                     "--gnuplot"]) == EXIT_OK
    values = props(capsys.readouterr().out)
    assert values["experiment"] == "custom"
    assert values["converged"] == "2"
    for name in ("run_meta.json", "summary.csv", "statistics.txt",
                 "plot.gp"):
        assert os.path.exists(str(out / name))


def test_experiment_toml_config(tmp_path, capsys):
    config = tmp_path / "small.toml"
    config.write_text('[experiment]\nid = "exp4"\ninstances = 2\n\n'
                      '[graph]\nn = 6\np = 0.6\n\n'
                      '[sheaf]\nvertex_dim = 2\nedge_dim = 1\n\n'
                      '[schedule]\nB = [1]\n\n'
                      '[run]\nmax_ticks = 2000\nstep_mode = "auto"\n')
    out = tmp_path / "out"
    assert cli_main(["experiment", "--config", str(config), "--out",
                     str(out), "--jobs", "2"]) == EXIT_OK
    values = props(capsys.readouterr().out)
    assert values["experiment"] == "exp4"
    assert os.path.exists(str(out / "scatter.csv"))


def test_experiment_bad_override(tmp_path):
    assert cli_main(["experiment", "--id", "exp1", "--out", str(tmp_path),
                     "-o", "run.speed=3"]) == EXIT_ERROR


def test_uav_demo(tmp_path, capsys):
    trace = str(tmp_path / "uav.csv")
    assert cli_main(["uav-demo", "--trace", trace]) == EXIT_OK
    values = props(capsys.readouterr().out)
    assert values["converged"] == "true"
    assert float(values["formation_energy"]) < 1e-6
    assert float(values["max_formation_error"]) <= 1e-3
    assert os.path.exists(trace)
