"""Experiments over asynchronous sheaf diffusion.

An experiment names the parameters it sweeps, knows how to run one
combination of them and how to summarize the results of all combinations.
Results are plain JSON-ready dictionaries so that summaries can be rebuilt
from the files the engine writes.
"""

import math

from abc import ABCMeta, abstractmethod

import numpy as np
import scipy.stats

from execo.log import style
from execo_engine import logger, slugify
from execo_engine.sweep import sweep

from sheaf_diffusion.diffusion import FLOOR_FACTOR, run_async
from sheaf_diffusion.engine.instances import GeneratedInstance, \
    LoadedInstance, UavInstance
from sheaf_diffusion.generators import UAV_LEADER_FOLLOWER, \
    UAV_LEADER_LEADER, uav_formation_energy
from sheaf_diffusion.objects import ConfigurationException, StepSizeException
from sheaf_diffusion.util import derive_seed, median_iqr, spearman


MIN_FIT_PERIODS = 5
MONOTONE_RTOL = 1e-10

UAV_ENERGY_TOL = 1e-6
UAV_FORMATION_TOL = 1e-3

CONVERGED = "converged"
NOT_CONVERGED = "not_converged"
DIVERGED = "diverged"

SUMMARY_HEADER = ("slug", "kind", "instance", "trial", "B", "status",
                  "t_star", "ticks", "gamma", "halvings", "a", "rho",
                  "r_squared", "fit_periods", "final_distance",
                  "final_residual", "lambda_2", "max_staleness",
                  "max_update_gap", "audit_violations")


# Contraction fits ############################################################

class ContractionFit(object):
    """A log-linear fit alpha(r (B + 1)) ~ a rho^r.

    Attributes:
      a (float or None):
        The fitted intercept.
      rho (float or None):
        The fitted per-period contraction ratio.
      r_squared (float or None):
        Coefficient of determination of the fit in log space.
      periods (int):
        Number of period samples above the numerical floor.
    """

    def __init__(self, a, rho, r_squared, periods):
        self.a = a
        self.rho = rho
        self.r_squared = r_squared
        self.periods = periods

    @property
    def available(self):
        return self.rho is not None

    def to_dict(self):
        return {"a": self.a, "rho": self.rho, "r_squared": self.r_squared,
                "periods": self.periods, "available": self.available}

    def __str__(self):
        if not self.available:
            return "ContractionFit(unavailable, %d periods)" % self.periods
        return "ContractionFit(a = %g, rho = %g, R2 = %g)" % \
               (self.a, self.rho, self.r_squared)


def pre_floor_segment(alphas):
    """The leading period samples that are finite and above the numerical
    floor 1e3 eps |alpha_0|."""

    if not len(alphas):
        return []
    floor = FLOOR_FACTOR * np.finfo(float).eps * abs(alphas[0])
    segment = []
    for alpha in alphas:
        if not (math.isfinite(alpha) and alpha > floor and alpha > 0):
            break
        segment.append(alpha)
    return segment


def _period_alphas(trace, B):
    if hasattr(trace, "period_alpha"):
        return [float(a) for _, a in trace.period_alpha]
    items = list(trace)
    if items and isinstance(items[0], (tuple, list)):
        period = (B or 0) + 1
        return [float(a) for t, a in items if t % period == 0]
    return [float(a) for a in items]


def fit_contraction(trace, B=None, min_periods=MIN_FIT_PERIODS):
    """Fit log alpha(r (B + 1)) = log a + r log rho over the pre-floor
    segment of a run.

    Args:
      trace (DiffusionTrace or list):
        A trace, a list of (tick, alpha) pairs (sampled every B + 1 ticks),
        or the per-period alphas themselves.
      B (int, optional):
        Delay bound of (tick, alpha) pairs.
      min_periods (int, optional):
        Fewer pre-floor periods make the fit unavailable.

    Returns (ContractionFit):
      The fit; a, rho and r_squared are None when unavailable.
    """

    segment = pre_floor_segment(_period_alphas(trace, B))
    if len(segment) < min_periods:
        logger.debug("Only %d periods above the floor, no contraction fit" %
                     len(segment))
        return ContractionFit(None, None, None, len(segment))

    fit = scipy.stats.linregress(np.arange(len(segment)), np.log(segment))
    r_squared = float(fit.rvalue) ** 2 if math.isfinite(fit.rvalue) else 0.0
    return ContractionFit(float(math.exp(fit.intercept)),
                          float(math.exp(fit.slope)), r_squared, len(segment))


def count_period_increases(alphas, rtol=MONOTONE_RTOL):
    """Number of periods after the first where alpha grew by more than rtol
    relative, ignoring samples at the numerical floor."""

    segment = pre_floor_segment(alphas)
    return sum(1 for k in range(2, len(segment))
               if segment[k] - segment[k - 1] > rtol * abs(segment[k - 1]))


# Summaries ###################################################################

class ExperimentSummary(object):
    """Per-combination rows and aggregate statistics of an experiment.

    Attributes:
      experiment_id (str):
        The experiment.
      rows (list of lists):
        One row per combination, columns SUMMARY_HEADER.
      statistics (list of (str, value)):
        Aggregates: counts, rank correlations, trend checks.
      notes (list of str):
        Flagged rows and excluded instances.
      tables (dict):
        Extra CSV files, name -> (header, rows).
    """

    def __init__(self, experiment_id, rows, statistics, notes=None,
                 tables=None):
        self.experiment_id = experiment_id
        self.rows = rows
        self.statistics = statistics
        self.notes = notes or []
        self.tables = tables or {}

    def get(self, name, default=None):
        for key, value in self.statistics:
            if key == name:
                return value
        return default

    def to_props(self):
        props = [("experiment", self.experiment_id)] + list(self.statistics)
        props.extend(("note.%d" % k, note) for k, note in enumerate(self.notes))
        return props

    def __str__(self):
        return "ExperimentSummary(%s, %d rows)" % (self.experiment_id,
                                                   len(self.rows))


def summary_row(result):
    comb = result["combination"]
    fit = result.get("fit") or {}
    audit = result.get("audit") or {}
    violations = None
    if audit:
        violations = audit["staleness_violations"] + audit["gap_violations"]
    return [result["slug"], comb.get("kind"), comb.get("instance"),
            comb.get("trial"), result["B"], result["status"],
            result.get("t_star"), result.get("ticks"), result.get("gamma"),
            result.get("halvings"), fit.get("a"), fit.get("rho"),
            fit.get("r_squared"), fit.get("periods"),
            result.get("final_distance"), result.get("final_residual"),
            result.get("lambda_2"), audit.get("max_staleness"),
            audit.get("max_update_gap"), violations]


def _status_counts(results):
    return [(status, sum(1 for r in results if r["status"] == status))
            for status in (CONVERGED, NOT_CONVERGED, DIVERGED)]


def _fitted_rhos(results):
    return [r["fit"]["rho"] for r in results
            if r["status"] == CONVERGED and r["fit"]["available"]]


# Experiments #################################################################

class Experiment(object, metaclass=ABCMeta):
    """This class defines the methods of an experiment.

    Subclasses choose the swept parameters, which instance, initial condition
    and schedule seed a combination uses, and which statistics the summary
    reports. Every combination carries a "B" parameter.
    """

    # whether the engine runs the combinations in a process pool by default
    parallel = False

    def __init__(self, config):
        """Create an experiment.

        Args:
          config (ExperimentConfig):
            The resolved configuration.
        """

        self.config = config
        self._instances = {}

    @abstractmethod
    def parameters(self):
        """Return the swept parameters as {name: list of values}."""
        pass

    @abstractmethod
    def instance_key(self, comb):
        pass

    @abstractmethod
    def make_instance(self, key):
        pass

    @abstractmethod
    def init_seed(self, comb):
        pass

    @abstractmethod
    def schedule_seed(self, comb):
        pass

    def statistics(self, results):
        """Return (statistics, notes, tables) of the given results."""

        rhos = _fitted_rhos(results)
        median, q1, q3 = median_iqr(rhos)
        statistics = _status_counts(results) + [
            ("rho_median", median), ("rho_q1", q1), ("rho_q3", q3),
            ("spearman_B_t_star", spearman(
                *self._converged_pairs(results, "t_star")))]
        return statistics, self._flag_notes(results), {}

    def combinations(self):
        """All combinations, in the deterministic order runs use."""

        return sorted(sweep(self.parameters()), key=slugify)

    def seed(self, stream, *keys):
        return derive_seed(self.config.seed, stream, *keys)

    def instance(self, comb):
        key = self.instance_key(comb)
        if key not in self._instances:
            self._instances[key] = self.make_instance(key)
        return self._instances[key]

    def generated(self, sheaf_kind, graph_seed, sheaf_seed, potentials_seed,
                  label):
        config = self.config
        return GeneratedInstance(config.generator(sheaf_kind), graph_seed,
                                 sheaf_seed, potentials_seed,
                                 config.potentials_kind, config.offset_mode,
                                 config.offset_scale, config.potential_weight,
                                 label)

    def run_combination(self, comb):
        """Run asynchronous diffusion for one combination.

        Args:
          comb (dict):
            The combination.

        Returns:
          (result, trace): the JSON-ready result and the DiffusionTrace,
          which is None when the run diverged.
        """

        slug = slugify(comb)
        B = int(comb["B"])
        instance = self.instance(comb)
        sheaf = instance.sheaf
        x0 = instance.initial_condition(self.config.variance,
                                        self.init_seed(comb))
        minimum = instance.minimum
        report = instance.report

        result = {"slug": slug,
                  "combination": dict(comb),
                  "B": B,
                  "instance": instance.to_dict(),
                  "connected": sheaf.graph.is_connected(),
                  "lambda_2": report.lambda_2,
                  "lambda_max": report.lambda_max,
                  "zero_multiplicity": report.zero_multiplicity,
                  "init_seed": self.init_seed(comb),
                  "schedule_seed": self.schedule_seed(comb)}

        logger.info("Run " + style.emph(slug))
        try:
            trace = run_async(sheaf, instance.potentials, x0, B,
                              self.config.policy(), self.config.stop(B),
                              rng_seed=self.schedule_seed(comb),
                              std_ratio=self.config.std_ratio,
                              minimum=minimum, report=report,
                              max_halvings=self.config.max_halvings)
        except StepSizeException as e:
            logger.warning(style.emph(slug) + " diverged: " + str(e))
            result.update({"status": DIVERGED, "note": str(e)})
            return result, None

        result.update({
            "status": CONVERGED if trace.converged else NOT_CONVERGED,
            "t_star": trace.converged_at,
            "ticks": trace.ticks,
            "gamma": trace.gamma,
            "halvings": trace.halvings,
            "f_star": trace.f_star,
            "final_energy": trace.records[-1].energy,
            "final_residual": trace.final_residual,
            "fit": fit_contraction(trace).to_dict(),
            "period_increases": count_period_increases(
                [a for _, a in trace.period_alpha]),
            "audit": trace.audit.to_dict(),
            "period_alpha": [[t, a] for t, a in trace.period_alpha],
            "final": trace.final.values.tolist()})
        if minimum is not None:
            projection = minimum.project(x0)
            result.update({
                "minimizer_set": minimum.characterization,
                "projection": projection.values.tolist(),
                "final_distance": float(np.linalg.norm(
                    trace.final.values - projection.values))})
        self.extend_result(result, instance, trace)

        if trace.converged:
            logger.info(style.emph(slug) + " converged at tick %d" %
                        trace.converged_at)
        else:
            logger.warning(style.emph(slug) + " did not converge in %d ticks"
                           % trace.ticks)
        return result, trace

    def extend_result(self, result, instance, trace):
        pass

    def summarize(self, results):
        """Build the ExperimentSummary of the given results."""

        results = sorted(results, key=lambda r: r["slug"])
        statistics, notes, tables = self.statistics(results)
        return ExperimentSummary(self.config.id,
                                 [summary_row(r) for r in results],
                                 statistics, notes, tables)

    def _converged_pairs(self, results, name):
        pairs = [(r["B"], r[name]) for r in results
                 if r["status"] == CONVERGED and r.get(name) is not None]
        return [b for b, _ in pairs], [v for _, v in pairs]

    def _flag_notes(self, results):
        return ["%s: %s" % (r["slug"], r["status"].replace("_", " "))
                for r in results if r["status"] != CONVERGED]


class Experiment1(Experiment):
    """Several sheaf kinds over one random regular graph, each from one fixed
    initial condition, for every delay bound."""

    parallel = True

    def parameters(self):
        return {"kind": self.config.sheaf_kinds,
                "B": self.config.B_values}

    def instance_key(self, comb):
        return comb["kind"]

    def make_instance(self, kind):
        return self.generated(kind, self.seed("graph"),
                              self.seed("sheaf", kind),
                              self.seed("potentials", kind), kind)

    def init_seed(self, comb):
        return self.seed("init", comb["kind"])

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["kind"], comb["B"])

    def statistics(self, results):
        statistics = _status_counts(results)
        for kind in self.config.sheaf_kinds:
            of_kind = [r for r in results
                       if r["combination"]["kind"] == kind]
            statistics.append(("%s.spearman_B_t_star" % kind, spearman(
                *self._converged_pairs(of_kind, "t_star"))))
            statistics.append(("%s.period_increases" % kind, sum(
                r.get("period_increases", 0) for r in of_kind)))
        return statistics, self._flag_notes(results), {}


class _FixedSheafExperiment(Experiment):
    """One random-restriction sheaf shared by every combination."""

    parallel = True

    def instance_key(self, comb):
        return "fixed"

    def make_instance(self, key):
        return self.generated(self.config.sheaf_kinds[0], self.seed("graph"),
                              self.seed("sheaf", key),
                              self.seed("potentials", key), key)


class Experiment2(_FixedSheafExperiment):
    """Many random initial conditions on one sheaf with one schedule seed per
    delay bound."""

    def parameters(self):
        return {"trial": list(range(self.config.trials)),
                "B": self.config.B_values}

    def init_seed(self, comb):
        return self.seed("init", comb["trial"])

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["B"])

    def statistics(self, results):
        statistics, notes, _ = super(Experiment2, self).statistics(results)
        rhos = _fitted_rhos(results)
        statistics.extend([
            ("trials", len(results)),
            ("all_converged",
             all(r["status"] == CONVERGED for r in results)),
            ("fits", len(rhos)),
            ("rho_below_one", sum(1 for rho in rhos if rho < 1))])
        return statistics, notes, {}


class Experiment3(_FixedSheafExperiment):
    """Distance between the averaged final iterates and the projection of the
    fixed initial condition, for a geometric grid of delay bounds."""

    def parameters(self):
        return {"B": self.config.B_values,
                "trial": list(range(self.config.trials))}

    def make_instance(self, key):
        instance = super(Experiment3, self).make_instance(key)
        if instance.minimum is None:
            msg = "The drift experiment needs potentials of the quadratic " \
                  "family"
            logger.error(msg)
            raise ConfigurationException(msg)
        return instance

    def init_seed(self, comb):
        return self.seed("init", "fixed")

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["B"], comb["trial"])

    def drift(self, results):
        """Return the rows (B, distance, trials, converged, max_residual)."""

        rows = []
        for B in sorted(set(r["B"] for r in results)):
            of_B = [r for r in results if r["B"] == B and "final" in r]
            if not of_B:
                rows.append([B, None, 0, 0, None])
                continue
            if self.config.average_distances:
                distance = float(np.mean([r["final_distance"] for r in of_B]))
            else:
                average = np.mean([r["final"] for r in of_B], axis=0)
                distance = float(np.linalg.norm(
                    average - np.array(of_B[0]["projection"])))
            rows.append([B, distance, len(of_B),
                         sum(1 for r in of_B if r["status"] == CONVERGED),
                         max(r["final_residual"] for r in of_B)])
        return rows

    def statistics(self, results):
        rows = self.drift(results)
        notes = self._flag_notes(results)
        for B, _, trials, converged, _ in rows:
            if converged < trials or trials < self.config.trials:
                notes.append("B = %d: %d of %d trials converged" %
                             (B, converged, self.config.trials))
        measured = [(B, d) for B, d, _, _, _ in rows if d is not None]
        rho = spearman([B for B, _ in measured], [d for _, d in measured])
        distance_0 = dict(measured).get(0)
        statistics = _status_counts(results) + [
            ("spearman_B_distance", rho),
            ("trend_ok", rho is not None and
             rho > self.config.trend_threshold),
            ("distance_B0", distance_0),
            ("average_distances", self.config.average_distances)]
        tables = {"drift.csv": (("B", "distance", "trials", "converged",
                                 "max_residual"), rows)}
        return statistics, notes, tables


class Experiment4(Experiment):
    """lambda_2 against convergence time over random Erdos-Renyi sheaves."""

    parallel = True

    def parameters(self):
        return {"instance": list(range(self.config.instances)),
                "B": self.config.B_values}

    def instance_key(self, comb):
        return comb["instance"]

    def make_instance(self, index):
        return self.generated(self.config.sheaf_kinds[0],
                              self.seed("graph", index),
                              self.seed("sheaf", index),
                              self.seed("potentials", index),
                              "instance-%d" % index)

    def init_seed(self, comb):
        return self.seed("init", comb["instance"])

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["instance"], comb["B"])

    def extend_result(self, result, instance, trace):
        rho = result["fit"]["rho"]
        if trace.converged and rho is not None and 0 < rho < 1:
            tol = self.config.stop(result["B"]).residual_tol
            predicted = (result["B"] + 1) * math.log(tol) / math.log(rho)
            result["rate_ratio"] = trace.converged_at / predicted
        else:
            result["rate_ratio"] = None

    def statistics(self, results):
        notes = self._flag_notes(results)
        rows = []
        for r in results:
            measured = r["status"] != DIVERGED
            included = measured and r["connected"] and \
                r["lambda_2"] is not None
            censored = r["status"] == NOT_CONVERGED
            if measured and not included:
                notes.append("%s excluded: disconnected graph (dim H^0 = %d)"
                             % (r["slug"], r["zero_multiplicity"]))
            elif included and censored:
                notes.append("%s censored at tick %d" % (r["slug"],
                                                         r["ticks"]))
            # a run stopped at the tick limit enters with t* = ticks
            t_star = r["ticks"] if censored else r.get("t_star")
            rows.append([r["combination"]["instance"], r["B"], r["lambda_2"],
                         t_star, (r.get("fit") or {}).get("rho"),
                         r["connected"], censored, included])
        used = [row for row in rows if row[7]]
        rho = spearman([row[2] for row in used], [row[3] for row in used])
        statistics = _status_counts(results) + [
            ("included", len(used)),
            ("excluded", len(rows) - len(used)),
            ("censored", sum(1 for row in used if row[6])),
            ("spearman_lambda_2_t_star", rho),
            ("trend_ok", rho is not None and
             rho < -self.config.trend_threshold)]
        tables = {"scatter.csv": (("instance", "B", "lambda_2", "t_star",
                                   "rho", "connected", "censored",
                                   "included"), rows)}
        return statistics, notes, tables


class UavExperiment(Experiment):
    """Two UAV formations reaching their displacements and common velocity
    from random starts."""

    def parameters(self):
        return {"trial": list(range(self.config.trials)),
                "B": self.config.B_values}

    def instance_key(self, comb):
        return "uav"

    def make_instance(self, key):
        return UavInstance(self.config.displacements)

    def init_seed(self, comb):
        return self.seed("init", comb["trial"])

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["trial"], comb["B"])

    def extend_result(self, result, instance, trace):
        displacements = instance.displacements
        states = trace.final.values.reshape(len(instance.sheaf.vertex_dims), 6)
        formation = [float(np.linalg.norm(states[i, :3] - states[j, :3] -
                                          np.array(d)))
                     for (i, j), d in zip(UAV_LEADER_FOLLOWER, displacements)]
        (a, b) = UAV_LEADER_LEADER
        result.update({
            "formation_energy": uav_formation_energy(trace.final.values,
                                                     displacements),
            "max_formation_error": max(formation),
            "velocity_error": float(np.linalg.norm(states[a, 3:] -
                                                   states[b, 3:]))})

    def statistics(self, results):
        statistics, notes, _ = super(UavExperiment, self).statistics(results)
        reached = [r for r in results if r["status"] != DIVERGED and
                   r["formation_energy"] < UAV_ENERGY_TOL and
                   r["max_formation_error"] <= UAV_FORMATION_TOL and
                   r["velocity_error"] <= UAV_FORMATION_TOL]
        statistics.extend([
            ("formation_reached", len(reached)),
            ("formation_ok", len(reached) == len(results))])
        return statistics, notes, {}


class CustomExperiment(Experiment):
    """Any generated or loaded sheaf, every sheaf kind, trial and delay
    bound."""

    def parameters(self):
        kinds = ["file"] if self.config.sheaf_path is not None \
            else self.config.sheaf_kinds
        return {"kind": kinds,
                "trial": list(range(self.config.trials)),
                "B": self.config.B_values}

    def instance_key(self, comb):
        return comb["kind"]

    def make_instance(self, kind):
        if self.config.sheaf_path is not None:
            return LoadedInstance(self.config.sheaf_path)
        return self.generated(kind, self.seed("graph"),
                              self.seed("sheaf", kind),
                              self.seed("potentials", kind), kind)

    def init_seed(self, comb):
        return self.seed("init", comb["kind"], comb["trial"])

    def schedule_seed(self, comb):
        return self.seed("schedule", comb["kind"], comb["trial"], comb["B"])


EXPERIMENTS = {
    "exp1": Experiment1,
    "exp2": Experiment2,
    "exp3": Experiment3,
    "exp4": Experiment4,
    "uav": UavExperiment,
    "custom": CustomExperiment
}


def make_experiment(config):
    return EXPERIMENTS[config.id](config)


def run_experiment(experiment):
    """Run every combination of an experiment in order, in memory.

    Returns:
      (traces, summary): traces maps combination slugs to DiffusionTraces
      (None for diverged runs).
    """

    results = []
    traces = {}
    for comb in experiment.combinations():
        result, trace = experiment.run_combination(comb)
        results.append(result)
        traces[result["slug"]] = trace
    return traces, experiment.summarize(results)


def run_experiment1(config):
    return run_experiment(Experiment1(config))


def run_experiment2(config):
    return run_experiment(Experiment2(config))


def run_experiment3(config):
    return run_experiment(Experiment3(config))


def run_experiment4(config):
    return run_experiment(Experiment4(config))
