import json

import numpy as np
import pytest

from sheaf_diffusion.diffusion import AUTO, FIXED, StepSizePolicy, \
    StoppingRule, run_async, run_sync
from sheaf_diffusion.engine.config import ExperimentConfig, parse_override
from sheaf_diffusion.engine.experiments import CONVERGED, SUMMARY_HEADER, \
    CustomExperiment, Experiment1, Experiment2, Experiment3, Experiment4, \
    UavExperiment, count_period_increases, fit_contraction, \
    make_experiment, pre_floor_segment, run_experiment, run_experiment1, \
    run_experiment2, run_experiment3, run_experiment4
from sheaf_diffusion.engine.instances import GeneratedInstance, \
    LoadedInstance, UavInstance, make_potentials
from sheaf_diffusion.generators import EXPLICIT, GeneratorConfig, \
    gaussian_initial_condition
from sheaf_diffusion.objects import ConfigurationException, \
    ParameterException
from sheaf_diffusion.potentials import PotentialSet
from sheaf_diffusion.serialization import save_sheaf
from sheaf_diffusion.util import geometric_grid


SMALL_REGULAR = ["graph.n=8", "graph.k=3", "sheaf.dim=2",
                 "sheaf.vertex_dim=2", "sheaf.edge_dim=1",
                 "run.step_mode=auto", "run.record_every=10"]


def small_config(experiment_id, tmp_path, *overrides):
    return ExperimentConfig(experiment_id,
                            overrides=SMALL_REGULAR + list(overrides),
                            out=str(tmp_path / "out"))


# Configuration ###############################################################

def test_experiment_defaults():
    config = ExperimentConfig("exp1")
    assert config.sheaf_kinds == ["constant", "random_restriction",
                                  "matrix_weighted"]
    assert config.B_values == [0, 10, 50, 200]
    assert config.seed == 0
    assert config.stop().record_every == 10
    assert ExperimentConfig("exp2").trials == 100
    assert ExperimentConfig("exp2").stop().record_every == 10
    assert ExperimentConfig("exp4").instances == 30


def test_drift_grid():
    assert ExperimentConfig("exp3").B_values == geometric_grid(10)
    full = ExperimentConfig("exp3", full_grid=True).B_values
    assert full[-1] == 2 ** 15
    assert len(full) == 17


def test_scaled_tick_limit():
    config = ExperimentConfig("exp3")
    assert config.stop(3).max_ticks == 80000
    assert config.stop(3).residual_tol == 1e-10
    assert ExperimentConfig("exp1").stop(3).max_ticks == 400000
    assert ExperimentConfig("exp2").stop(3).max_ticks == 100000


def test_resolution_order(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\nid = exp2\nseed = 5\n\n"
                    "[run]\nmax_ticks = 500\nresidual_tol = 1e-6\n")
    config = ExperimentConfig(config_file=str(path),
                              overrides=["run.max_ticks=600"], seed=9)
    assert config.id == "exp2"
    assert config.seed == 9
    assert config.stop().max_ticks == 600
    assert config.stop().residual_tol == 1e-6
    assert config.trials == 100


def test_toml_config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('[experiment]\nid = "exp4"\nseed = 7\n\n'
                    '[schedule]\nB = [5, 7]\n\n'
                    '[run]\nmax_ticks = 600\nresidual_tol = 1e-06\n'
                    'scale_max_ticks = true\n')
    config = ExperimentConfig(config_file=str(path))
    assert config.id == "exp4"
    assert config.seed == 7
    assert config.B_values == [5, 7]
    assert config.stop(1).max_ticks == 1200
    assert config.stop().residual_tol == 1e-6


def test_toml_displacements(tmp_path):
    path = tmp_path / "uav.toml"
    path.write_text('[experiment]\nid = "uav"\n\n[potentials]\n'
                    'displacements = [[2, 0, 0], [0, 2, 0], [-2, 0, 0], '
                    '[0, -2, 0]]\n')
    config = ExperimentConfig(config_file=str(path))
    assert config.displacements[2] == [-2.0, 0.0, 0.0]


def test_json_config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({
        "experiment": {"id": "custom", "trials": 2},
        "graph": {"kind": "explicit", "n": 3, "edges": [[0, 1], [1, 2]]},
        "output": {"traces": False},
        "run": {"gamma": None}}))
    config = ExperimentConfig(config_file=str(path))
    assert config.id == "custom"
    assert config.trials == 2
    assert config.generator().make_graph(0).edges == ((0, 1), (1, 2))
    assert config.traces is False
    assert config.get("run", "gamma") == ""


@pytest.mark.parametrize("name, text", [
    ("bad.toml", "[run\nmax_ticks = "),
    ("nested.toml", "[run.limits]\nmax_ticks = 5\n"),
    ("unknown.toml", "[run]\nspeed = 3\n"),
    ("bad.json", "{\"run\": "),
    ("list.json", "[1, 2]"),
    ("scalar.json", "{\"run\": 5}"),
    ("bad.ini", "max_ticks = 5\n"),
])
def test_malformed_config_files(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    with pytest.raises(ConfigurationException):
        ExperimentConfig("exp1", config_file=str(path))


def test_override_syntax():
    assert parse_override(" run.gamma = 0.1 ") == ("run", "gamma", "0.1")
    with pytest.raises(ConfigurationException):
        parse_override("run.gamma")
    with pytest.raises(ConfigurationException):
        parse_override("gamma=0.1")


@pytest.mark.parametrize("override, exception", [
    ("nowhere.key=1", ConfigurationException),
    ("run.speed=1", ConfigurationException),
    ("experiment.trials=0", ParameterException),
    ("schedule.B=-1", ParameterException),
    ("schedule.B=a", ConfigurationException),
    ("run.max_ticks=many", ParameterException),
    ("run.step_mode=fixed", ParameterException),
    ("run.step_mode=newton", ConfigurationException),
    ("sheaf.kind=twisted", ConfigurationException),
    ("output.traces=perhaps", ConfigurationException),
])
def test_invalid_values(override, exception):
    with pytest.raises(exception):
        ExperimentConfig("exp1", overrides=[override])


def test_unknown_experiment_and_file(tmp_path):
    with pytest.raises(ConfigurationException):
        ExperimentConfig("exp9")
    with pytest.raises(ConfigurationException):
        ExperimentConfig(config_file=str(tmp_path / "missing.ini"))


def test_config_round_trip():
    config = ExperimentConfig("exp4", overrides=["graph.p=0.25",
                                                 "schedule.B=5,7"], seed=3)
    assert ExperimentConfig.from_dict(config.to_dict()) == config
    assert ExperimentConfig("exp4") != config


def test_policy_from_config():
    config = ExperimentConfig("exp1", overrides=["run.step_mode=fixed",
                                                 "run.gamma=0.05"])
    policy = config.policy()
    assert policy.mode == FIXED
    assert policy.step_size(10.0, 3) == 0.05


def test_displacements():
    config = ExperimentConfig("uav")
    assert config.displacements[2] == [-1.0, 0.0, 0.0]
    with pytest.raises(ConfigurationException):
        ExperimentConfig("uav", overrides=["potentials.displacements=1,0,0"])


def test_explicit_graph_edges():
    config = ExperimentConfig("custom", overrides=[
        "graph.kind=explicit", "graph.n=3", "graph.edges=0,1; 1,2"])
    generator = config.generator()
    assert generator.graph_kind == EXPLICIT
    assert generator.make_graph(0).edges == ((0, 1), (1, 2))


def test_file_graph(tmp_path, cycle_sheaf):
    with pytest.raises(ConfigurationException):
        ExperimentConfig("custom", overrides=[
            "graph.kind=file", "graph.path=" + str(tmp_path / "none.json")])
    path = str(tmp_path / "cycle.json")
    save_sheaf(path, cycle_sheaf)
    config = ExperimentConfig("custom", overrides=["graph.kind=file",
                                                   "graph.path=" + path])
    assert config.sheaf_path == path
    assert ExperimentConfig("custom").sheaf_path is None


# Instances ###################################################################

def test_make_potentials(cycle_sheaf):
    assert make_potentials(cycle_sheaf) == PotentialSet.quadratic(cycle_sheaf)
    scaled = make_potentials(cycle_sheaf, "scaled_quadratic", weight=2.0)
    assert scaled.m == 2.0
    offsets = make_potentials(cycle_sheaf, "offset_quadratic", seed=1)
    assert offsets[(0, 1)].offset is not None
    with pytest.raises(ConfigurationException):
        make_potentials(cycle_sheaf, "cubic")


def test_generated_instance():
    generator = GeneratorConfig("regular", n=8, k=3, sheaf_kind="constant",
                                dim=2)
    instance = GeneratedInstance(generator, 1, 2)
    assert instance.label == "constant"
    assert instance.sheaf.c0_dim == 16
    assert instance.weights is None
    assert instance.minimum.f_star == pytest.approx(0.0, abs=1e-12)
    assert instance.report.lambda_max > 0
    assert instance.to_dict()["graph_seed"] == 1
    x = instance.initial_condition(10.0, 4)
    assert np.array_equal(x.values,
                          instance.initial_condition(10.0, 4).values)


def test_matrix_weighted_instance_keeps_weights():
    generator = GeneratorConfig("regular", n=6, k=2,
                                sheaf_kind="matrix_weighted", dim=2)
    instance = GeneratedInstance(generator, 0, 0)
    assert set(instance.weights) == set(instance.sheaf.edges)


def test_loaded_instance(tmp_path, cycle_sheaf):
    with pytest.raises(ConfigurationException):
        LoadedInstance(str(tmp_path / "none.json"))
    path = str(tmp_path / "cycle.json")
    save_sheaf(path, cycle_sheaf)
    instance = LoadedInstance(path)
    assert instance.label == "cycle"
    assert instance.potentials == PotentialSet.quadratic(cycle_sheaf)
    assert instance.report.lambda_2 == pytest.approx(1.0)


def test_uav_instance():
    instance = UavInstance([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]])
    assert instance.sheaf.c0_dim == 36
    assert instance.minimum.consistent


# Contraction fits ############################################################

def test_fit_of_geometric_sequence():
    fit = fit_contraction([4.0 * 0.5 ** r for r in range(20)])
    assert fit.available
    assert fit.a == pytest.approx(4.0)
    assert fit.rho == pytest.approx(0.5)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.periods == 20


def test_fit_of_tick_pairs():
    fit = fit_contraction([(t, 0.9 ** t) for t in range(30)], B=2)
    assert fit.rho == pytest.approx(0.9 ** 3)
    assert fit.periods == 10


def test_fit_needs_enough_periods():
    fit = fit_contraction([1.0, 0.5, 0.25])
    assert not fit.available
    assert fit.periods == 3
    assert fit.to_dict()["rho"] is None


def test_pre_floor_segment():
    assert pre_floor_segment([1.0, 0.1, 1e-20, 1e-3]) == [1.0, 0.1]
    assert pre_floor_segment([2.0, 1.0, 0.0, 0.5]) == [2.0, 1.0]
    assert pre_floor_segment([]) == []


def test_count_period_increases():
    assert count_period_increases([1.0, 0.5, 0.6, 0.3, 0.35]) == 2
    assert count_period_increases([1.0, 0.5, 0.25]) == 0


def test_fit_of_synchronous_run(edge_sheaf):
    trace = run_sync(edge_sheaf, PotentialSet.quadratic(edge_sheaf),
                     [1.0, -1.0], policy=StepSizePolicy.fixed(0.25))
    fit = fit_contraction(trace)
    assert fit.rho == pytest.approx(0.25, rel=1e-9)
    assert fit.a == pytest.approx(2.0, rel=1e-9)


def test_fit_of_asynchronous_run(cycle_sheaf):
    x0 = gaussian_initial_condition(cycle_sheaf, 10.0, 0)
    trace = run_async(cycle_sheaf, PotentialSet.quadratic(cycle_sheaf), x0,
                      10, policy=StepSizePolicy(AUTO),
                      stop=StoppingRule(max_ticks=100000), rng_seed=1)
    assert trace.converged
    fit = fit_contraction(trace)
    assert fit.available
    assert fit.rho < 1


# Experiments #################################################################

def test_experiment1_reduced(tmp_path):
    config = small_config("exp1", tmp_path, "schedule.B=0,3",
                          "run.max_ticks=2000")
    traces, summary = run_experiment1(config)
    assert len(traces) == 6
    assert len(summary.rows) == 6
    violations = SUMMARY_HEADER.index("audit_violations")
    assert all(row[violations] == 0 for row in summary.rows
               if row[SUMMARY_HEADER.index("status")] != "diverged")
    assert summary.get("constant.spearman_B_t_star") is None
    assert summary.get("constant.period_increases") is not None


def test_experiment1_t_star_grows_with_B(tmp_path):
    config = small_config("exp1", tmp_path, "sheaf.kind=constant",
                          "sheaf.dim=1", "schedule.B=0,5,20",
                          "run.max_ticks=5000")
    _, summary = run_experiment1(config)
    assert summary.get("converged") == 3
    B, t_star = SUMMARY_HEADER.index("B"), SUMMARY_HEADER.index("t_star")
    t_stars = [row[t_star] for row in sorted(summary.rows,
                                             key=lambda row: row[B])]
    assert t_stars[0] < t_stars[1] < t_stars[2]
    assert summary.get("constant.spearman_B_t_star") == pytest.approx(1.0)


def test_experiment1_b_zero_is_synchronous(tmp_path):
    config = small_config("exp1", tmp_path, "schedule.B=0",
                          "run.max_ticks=500")
    experiment = Experiment1(config)
    for comb in experiment.combinations():
        result, trace = experiment.run_combination(comb)
        instance = experiment.instance(comb)
        x0 = instance.initial_condition(config.variance,
                                        experiment.init_seed(comb))
        sync = run_sync(instance.sheaf, instance.potentials, x0,
                        config.policy(), config.stop(0), instance.minimum,
                        instance.report, config.max_halvings)
        assert trace == sync
        assert result["B"] == 0


def test_experiment1_seeds_are_shared_across_B(tmp_path):
    config = small_config("exp1", tmp_path, "schedule.B=0,3")
    experiment = Experiment1(config)
    combs = [c for c in experiment.combinations() if c["kind"] == "constant"]
    assert len(set(experiment.init_seed(c) for c in combs)) == 1
    assert len(set(experiment.schedule_seed(c) for c in combs)) == 2


def test_experiment2_reduced(tmp_path):
    config = small_config("exp2", tmp_path, "sheaf.kind=constant",
                          "sheaf.dim=1", "experiment.trials=3",
                          "schedule.B=2", "run.max_ticks=20000")
    experiment = Experiment2(config)
    combs = experiment.combinations()
    assert len(set(experiment.init_seed(c) for c in combs)) == 3
    assert len(set(experiment.schedule_seed(c) for c in combs)) == 1

    _, summary = run_experiment2(config)
    assert summary.get("trials") == 3
    assert summary.get("all_converged")
    assert summary.get("fits") == 3
    assert summary.get("rho_below_one") == 3
    rho = SUMMARY_HEADER.index("rho")
    assert all(row[rho] < 1 for row in summary.rows)


@pytest.mark.parametrize("average", ["false", "true"])
def test_experiment3_reduced(tmp_path, average):
    config = small_config("exp3", tmp_path, "graph.n=6", "graph.k=2",
                          "sheaf.kind=constant", "sheaf.dim=1",
                          "schedule.B=0,1,2", "experiment.trials=2",
                          "experiment.average_distances=" + average)
    _, summary = run_experiment3(config)
    header, rows = summary.tables["drift.csv"]
    assert header[:2] == ("B", "distance")
    assert [row[0] for row in rows] == [0, 1, 2]
    assert all(row[2] == 2 for row in rows)
    assert summary.get("converged") == 6
    assert summary.get("distance_B0") <= 1e-6
    assert summary.get("average_distances") == (average == "true")


def test_experiment3_drift_grows_with_B(tmp_path):
    # B = 0 and B = 1 both update and broadcast on every tick
    config = small_config("exp3", tmp_path, "graph.n=6", "graph.k=2",
                          "sheaf.kind=constant", "sheaf.dim=1",
                          "schedule.B=0,1,4,8,16", "experiment.trials=2")
    _, summary = run_experiment3(config)
    assert summary.get("converged") == 10
    distances = dict((row[0], row[1])
                     for row in summary.tables["drift.csv"][1])
    assert distances[0] <= 1e-6
    assert distances[1] <= 1e-6
    assert all(distances[B] > distances[1] for B in (4, 8, 16))
    assert summary.get("spearman_B_distance") > 0


def test_experiment4_reduced(tmp_path):
    config = small_config("exp4", tmp_path, "graph.n=6", "graph.p=0.6",
                          "experiment.instances=4", "schedule.B=2",
                          "run.max_ticks=3000")
    _, summary = run_experiment4(config)
    header, rows = summary.tables["scatter.csv"]
    assert header == ("instance", "B", "lambda_2", "t_star", "rho",
                      "connected", "censored", "included")
    assert len(rows) == 4
    assert summary.get("included") + summary.get("excluded") == 4

    _, again = run_experiment4(config)
    assert again.rows == summary.rows


def test_experiment4_t_star_falls_with_lambda_2(tmp_path):
    config = small_config("exp4", tmp_path, "graph.n=8", "graph.p=0.5",
                          "sheaf.kind=constant", "sheaf.dim=1",
                          "experiment.instances=10", "schedule.B=2",
                          "run.step_mode=fixed", "run.gamma=0.05",
                          "run.max_ticks=20000")
    _, summary = run_experiment4(config)
    assert summary.get("censored") == 0
    assert summary.get("included") >= 8
    assert summary.get("spearman_lambda_2_t_star") < -0.5
    assert summary.get("trend_ok")


def test_experiment4_censors_runs_at_the_tick_limit(tmp_path):
    config = small_config("exp4", tmp_path, "graph.n=6", "graph.p=0.6",
                          "experiment.instances=3", "schedule.B=1",
                          "run.max_ticks=5")
    _, summary = run_experiment4(config)
    assert summary.get("converged") == 0
    _, rows = summary.tables["scatter.csv"]
    included = [row for row in rows if row[7]]
    assert summary.get("censored") == len(included)
    assert all(row[6] and row[3] == 5 for row in included)
    assert sum(1 for note in summary.notes if "censored" in note) == \
        len(included)


def test_experiment4_excludes_disconnected(tmp_path):
    config = small_config("exp4", tmp_path, "graph.n=4", "graph.p=0.0",
                          "experiment.instances=3", "schedule.B=1")
    _, summary = run_experiment4(config)
    assert summary.get("included") == 0
    assert summary.get("excluded") == 3
    assert summary.get("trend_ok") is False
    assert sum(1 for note in summary.notes if "excluded" in note) == 3


def test_uav_formation(tmp_path):
    config = ExperimentConfig("uav", out=str(tmp_path))
    traces, summary = run_experiment(UavExperiment(config))
    assert summary.get("formation_ok")
    assert summary.get("formation_reached") == 1
    (trace,) = traces.values()
    assert trace.B == 20
    assert trace.converged


def test_custom_experiment_on_file(tmp_path, cycle_sheaf):
    path = str(tmp_path / "cycle.json")
    save_sheaf(path, cycle_sheaf)
    config = ExperimentConfig("custom", overrides=[
        "graph.kind=file", "graph.path=" + path, "schedule.B=0,2",
        "run.step_mode=auto"], out=str(tmp_path / "out"))
    experiment = make_experiment(config)
    assert isinstance(experiment, CustomExperiment)
    _, summary = run_experiment(experiment)
    assert len(summary.rows) == 2
    assert all(row[1] == "file" for row in summary.rows)
    assert summary.get(CONVERGED) == 2


def test_make_experiment():
    assert isinstance(make_experiment(ExperimentConfig("exp3")), Experiment3)
    assert isinstance(make_experiment(ExperimentConfig("exp4")), Experiment4)
    assert isinstance(make_experiment(ExperimentConfig("exp2")), Experiment2)
