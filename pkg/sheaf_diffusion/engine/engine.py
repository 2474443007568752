import json
import os
import shutil

from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait

from execo.log import style
from execo_engine import logger, slugify
from execo_engine.sweep import ParamSweeper, sweep

from sheaf_diffusion.diffusion import TICK_SEMANTICS, TRACE_HEADER
from sheaf_diffusion.engine.config import ExperimentConfig
from sheaf_diffusion.engine.experiments import SUMMARY_HEADER, \
    make_experiment
from sheaf_diffusion.objects import ConfigurationException
from sheaf_diffusion.serialization import read_json, write_json
from sheaf_diffusion.util import ensure_dir, write_csv, write_props


RUN_META_FILE = "run_meta.json"
SUMMARY_FILE = "summary.csv"
STATISTICS_FILE = "statistics.txt"
PLOT_FILE = "plot.gp"

SWEEPS_DIR = "sweeps"
RESULTS_DIR = "results"
TRACES_DIR = "traces"


def _first_by_slug(remaining):
    return sorted(remaining, key=slugify)


def default_jobs(experiment):
    """One worker per CPU for experiments marked parallel, 1 otherwise."""

    if experiment.parallel:
        return max(1, os.cpu_count() or 1)
    return 1


# One experiment object per configuration and worker process.
_worker_experiments = {}


def run_combination_worker(config_doc, comb):
    """Run one combination in a worker process.

    Returns:
      (result, rows): the result dictionary and the trace records, None for
      diverged runs.
    """

    key = json.dumps(config_doc, sort_keys=True)
    if key not in _worker_experiments:
        _worker_experiments[key] = \
            make_experiment(ExperimentConfig.from_dict(config_doc))
    result, trace = _worker_experiments[key].run_combination(comb)
    return result, trace.rows() if trace is not None else None


class ExperimentEngine(object):
    """This class runs the combinations of an experiment and keeps track of
    them in a ParamSweeper, so that an interrupted sweep can be resumed.

    The output directory holds:

    - run_meta.json: the resolved configuration and every derived seed.
    - sweeps/: the state of the sweeper.
    - results/<slug>.json and traces/<slug>.csv: one per combination.
    - summary.csv, statistics.txt and the experiment's extra tables, rebuilt
      from results/ after every run.
    - plot.gp: a gnuplot script over the CSV files, when output.gnuplot is
      set.
    """

    def __init__(self, config, jobs=None, resume=False):
        """Create a new engine.

        Args:
          config (ExperimentConfig):
            The resolved configuration.
          jobs (int, optional):
            Number of worker processes; 1 runs everything in this process.
            By default experiments with many independent combinations use
            one worker per CPU and the others run in this process.
          resume (bool, optional):
            Continue the sweep found in the output directory instead of
            starting over.
        """

        self.experiment = make_experiment(config)
        if jobs is None:
            jobs = default_jobs(self.experiment)
        if jobs < 1:
            msg = "The number of jobs must be positive, got %d" % jobs
            logger.error(msg)
            raise ConfigurationException(msg)

        self.config = config
        self.jobs = jobs
        self.resume = resume
        self.result_dir = config.output_dir
        self.sweeper = None

    def _path(self, *parts):
        return os.path.join(self.result_dir, *parts)

    def run(self):
        """Execute the experiment. The workflow is as follows:

        1. Prepare the output directory and the sweeper.

        2. Consume the remaining combinations in slug order, sequentially or
        in a process pool.

        3. Rebuild the summary from the result files.

        Returns (ExperimentSummary):
          The summary of every finished combination.
        """

        self.prepare()
        logger.info("Run experiment " + style.emph(self.config.id) +
                    " with %d job(s)" % self.jobs)

        if self.jobs == 1:
            while len(self.sweeper.get_remaining()) > 0:
                comb = self.sweeper.get_next(_first_by_slug)
                if comb is None:
                    break
                self.xp_wrapper(comb)
        else:
            self._run_parallel()

        return self.summarize()

    def prepare(self):
        """Create the output directories, write run_meta.json and open the
        sweeper.

        Raises:
          ConfigurationException:
            If the output directory is not writable, or when resuming a sweep
            made with another configuration.
        """

        meta_file = self._path(RUN_META_FILE)
        meta = self.run_meta()

        try:
            ensure_dir(self.result_dir)
            if self.resume and os.path.exists(meta_file):
                stored = read_json(meta_file)
                if stored.get("config") != meta["config"]:
                    msg = "The configuration differs from the one of the " \
                          "sweep in " + self.result_dir + ", cannot resume"
                    logger.error(msg)
                    raise ConfigurationException(msg)
            elif not self.resume:
                for name in (SWEEPS_DIR, RESULTS_DIR, TRACES_DIR):
                    if os.path.exists(self._path(name)):
                        logger.debug("Remove previous " + self._path(name))
                        shutil.rmtree(self._path(name))
            for name in (RESULTS_DIR, TRACES_DIR):
                ensure_dir(self._path(name))
            write_json(meta_file, meta)
        except (IOError, OSError) as e:
            msg = "Cannot write in " + self.result_dir + ": " + str(e)
            logger.error(msg)
            raise ConfigurationException(msg)

        self.sweeper = ParamSweeper(self._path(SWEEPS_DIR),
                                    sweep(self.experiment.parameters()),
                                    save_sweeps=True)
        for comb in list(self.sweeper.get_inprogress()):
            self.sweeper.cancel(comb)

        logger.info("%d combinations, %d remaining",
                    len(self.sweeper.get_sweeps()),
                    len(self.sweeper.get_remaining()))

    def run_meta(self):
        """The resolved configuration, master seed and per-combination seeds.
        Contains no timestamps, so equal configurations give equal files."""

        return {"experiment": self.config.id,
                "config": self.config.to_dict(),
                "master_seed": self.config.seed,
                "tick_semantics": TICK_SEMANTICS,
                "combinations": [
                    {"slug": slugify(comb),
                     "combination": dict(comb),
                     "init_seed": self.experiment.init_seed(comb),
                     "schedule_seed": self.experiment.schedule_seed(comb)}
                    for comb in self.experiment.combinations()]}

    def xp_wrapper(self, comb):
        """Run one combination and mark it done, or cancelled if it raised.

        Args:
          comb (dict):
            The combination.
        """

        comb_ok = False
        try:
            result, trace = self.experiment.run_combination(comb)
            self.save(result, trace.rows() if trace is not None else None)
            comb_ok = True
        finally:
            if comb_ok:
                self.sweeper.done(comb)
            else:
                self.sweeper.cancel(comb)
            logger.info('%s Remaining', len(self.sweeper.get_remaining()))

    def _run_parallel(self):
        config_doc = self.config.to_dict()
        with ProcessPoolExecutor(max_workers=self.jobs) as executor:
            pending = {}
            while True:
                while len(pending) < self.jobs:
                    comb = self.sweeper.get_next(_first_by_slug)
                    if comb is None:
                        break
                    future = executor.submit(run_combination_worker,
                                             config_doc, dict(comb))
                    pending[future] = comb
                if not pending:
                    break

                finished, _ = wait(pending, return_when=FIRST_COMPLETED)
                for future in sorted(finished,
                                     key=lambda f: slugify(pending[f])):
                    comb = pending.pop(future)
                    comb_ok = False
                    try:
                        self.save(*future.result())
                        comb_ok = True
                    finally:
                        if comb_ok:
                            self.sweeper.done(comb)
                        else:
                            self.sweeper.cancel(comb)
                        logger.info('%s Remaining',
                                    len(self.sweeper.get_remaining()))

    def save(self, result, rows):
        slug = result["slug"]
        write_json(self._path(RESULTS_DIR, slug + ".json"), result)
        if self.config.traces and rows is not None:
            write_csv(self._path(TRACES_DIR, slug + ".csv"), TRACE_HEADER,
                      rows)

    def load_results(self):
        """Return the results of every finished combination, in slug order."""

        results = []
        for comb in self.experiment.combinations():
            f = self._path(RESULTS_DIR, slugify(comb) + ".json")
            if os.path.exists(f):
                results.append(read_json(f))
        return results

    def summarize(self):
        """Rebuild summary.csv, statistics.txt and the extra tables from the
        result files.

        Returns (ExperimentSummary):
          The summary.
        """

        results = self.load_results()
        summary = self.experiment.summarize(results)

        write_csv(self._path(SUMMARY_FILE), SUMMARY_HEADER, summary.rows)
        write_props(self._path(STATISTICS_FILE), summary.to_props())
        for name, (header, rows) in sorted(summary.tables.items()):
            write_csv(self._path(name), header, rows)
        if self.config.gnuplot:
            self.write_gnuplot(summary)

        for note in summary.notes:
            logger.warning(note)
        logger.info("Experiment " + style.emph(self.config.id) + ": %d of "
                    "%d combinations finished", len(results),
                    len(self.experiment.combinations()))
        return summary

    def write_gnuplot(self, summary):
        lines = ['set datafile separator ","',
                 "set key autotitle columnhead outside"]
        if "drift.csv" in summary.tables:
            lines += ["set xlabel 'B'", "set ylabel 'distance'",
                      "plot 'drift.csv' using 1:2 with linespoints"]
        elif "scatter.csv" in summary.tables:
            lines += ["set xlabel 'lambda_2'", "set ylabel 't*'",
                      "plot 'scatter.csv' using 3:4 with points"]
        else:
            traces = sorted(row[0] for row in summary.rows
                            if os.path.exists(self._path(TRACES_DIR,
                                                         row[0] + ".csv")))
            lines += ["set logscale y", "set xlabel 'tick'",
                      "set ylabel 'f(x) - f*'",
                      "plot for [f in \"%s\"] 'traces/'.f.'.csv' "
                      "using 1:3 with lines title f" % " ".join(traces)]
        with open(self._path(PLOT_FILE), "w") as out_file:
            out_file.write("\n".join(lines) + "\n")
