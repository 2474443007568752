"""The sheafdiff command line.

Subcommands:

- generate: draw a sheaf and its potentials, write them as a JSON document.
- spectrum: print the spectral quantities of a sheaf document.
- diffuse: run synchronous or asynchronous diffusion on a sheaf document.
- experiment: run one of the experiments into an output directory.
- uav-demo: drive the two-formation UAV sheaf to its formation.

Exit codes are 0 on success, 1 on configuration, validation or I/O errors, 2
on usage errors and 3 when diffusion diverges.
"""

import argparse
import json
import logging
import sys

from execo.log import style
from execo_engine import logger

from sheaf_diffusion.diffusion import DEFAULT_MAX_HALVINGS, \
    DEFAULT_MAX_TICKS, DEFAULT_MIXTURE_STD_RATIO, DEFAULT_RECORD_EVERY, \
    DEFAULT_RESIDUAL_TOL, DEFAULT_SAFETY, FIXED, LIPSCHITZ, STEP_MODES, \
    StepSizePolicy, StoppingRule, run_async, run_sync
from sheaf_diffusion.engine.config import EXPERIMENT_IDS, ExperimentConfig
from sheaf_diffusion.engine.engine import ExperimentEngine
from sheaf_diffusion.engine.experiments import CONVERGED, DIVERGED, \
    UavExperiment, fit_contraction
from sheaf_diffusion.engine.instances import GeneratedInstance, \
    LoadedInstance
from sheaf_diffusion.generators import GRAPH_KINDS, OFFSETS_IN_IMAGE, \
    OFFSETS_RANDOM, REGULAR, CONSTANT, SHEAF_KINDS, GeneratorConfig, \
    gaussian_initial_condition
from sheaf_diffusion.objects import SheafException, StepSizeException
from sheaf_diffusion.potentials import OFFSET_QUADRATIC, QUADRATIC, \
    SCALED_QUADRATIC
from sheaf_diffusion.serialization import save_sheaf, sheaf_to_dict, \
    write_json
from sheaf_diffusion.spectral import DEFAULT_ZERO_THRESHOLD, analyze
from sheaf_diffusion.util import derive_seed, format_value, parse_list, \
    write_csv


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

DEFAULT_VARIANCE = 10.0
DEFAULT_UAV_B = 20


def _print_props(items):
    for name, value in items:
        print(name + "\t" + format_value(value))


def _parse_edges(text):
    if not text:
        return []
    return [tuple(parse_list(part, int)) for part in text.split(";")
            if part.strip()]


# Parser ######################################################################

def _add_run_arguments(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="Master seed of the initial condition and the "
                             "schedule")
    parser.add_argument("--variance", type=float, default=DEFAULT_VARIANCE,
                        help="Variance of the Gaussian initial condition")
    parser.add_argument("--step-mode", choices=STEP_MODES, default=None,
                        help="Step size policy (lipschitz by default, fixed "
                             "when --gamma is given)")
    parser.add_argument("--gamma", type=float, default=None,
                        help="Fixed step size")
    parser.add_argument("--safety", type=float, default=DEFAULT_SAFETY,
                        help="Safety factor of the auto and lipschitz "
                             "policies")
    parser.add_argument("--max-ticks", type=int, default=DEFAULT_MAX_TICKS)
    parser.add_argument("--residual-tol", type=float,
                        default=DEFAULT_RESIDUAL_TOL)
    parser.add_argument("--record-every", type=int,
                        default=DEFAULT_RECORD_EVERY)
    parser.add_argument("--max-halvings", type=int,
                        default=DEFAULT_MAX_HALVINGS)
    parser.add_argument("--std-ratio", type=float,
                        default=DEFAULT_MIXTURE_STD_RATIO,
                        help="Standard deviation ratio of the schedule "
                             "mixtures")
    parser.add_argument("--trace", metavar="CSV",
                        help="Write the trace records to this file")
    parser.add_argument("--meta", metavar="JSON",
                        help="Write the run metadata to this file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sheafdiff",
        description="Synchronous and partially asynchronous sheaf diffusion.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true",
                           help="Log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true",
                           help="Only log warnings and errors")

    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    generate = subparsers.add_parser("generate",
                                     help="Generate a sheaf document")
    generate.add_argument("--graph-kind", choices=GRAPH_KINDS,
                          default=REGULAR)
    generate.add_argument("--n", type=int, default=20)
    generate.add_argument("--k", type=int, default=4)
    generate.add_argument("--p", type=float, default=0.3)
    generate.add_argument("--edges", default="",
                          help='Edges of an explicit graph, e.g. "0,1; 1,2"')
    generate.add_argument("--sheaf-kind", choices=SHEAF_KINDS,
                          default=CONSTANT)
    generate.add_argument("--dim", type=int, default=4)
    generate.add_argument("--vertex-dim", type=int, default=4)
    generate.add_argument("--edge-dim", type=int, default=1)
    generate.add_argument("--pd-probability", type=float, default=0.2)
    generate.add_argument("--potentials",
                          choices=(QUADRATIC, OFFSET_QUADRATIC,
                                   SCALED_QUADRATIC), default=QUADRATIC)
    generate.add_argument("--offset-mode",
                          choices=(OFFSETS_IN_IMAGE, OFFSETS_RANDOM),
                          default=OFFSETS_IN_IMAGE)
    generate.add_argument("--offset-scale", type=float, default=1.0)
    generate.add_argument("--weight", type=float, default=1.0)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", metavar="FILE",
                          help="Output file (standard output if omitted)")

    spectrum = subparsers.add_parser("spectrum",
                                     help="Print the spectrum of a sheaf")
    spectrum.add_argument("file")
    spectrum.add_argument("--zero-threshold", type=float,
                          default=DEFAULT_ZERO_THRESHOLD)
    spectrum.add_argument("--eigenvalues", metavar="CSV",
                          help="Write all eigenvalues to this file")

    diffuse = subparsers.add_parser("diffuse", help="Run diffusion")
    diffuse.add_argument("file")
    mode = diffuse.add_mutually_exclusive_group(required=True)
    mode.add_argument("--B", type=int, help="Delay bound")
    mode.add_argument("--sync", action="store_true",
                      help="Synchronous diffusion")
    _add_run_arguments(diffuse)

    experiment = subparsers.add_parser("experiment",
                                       help="Run an experiment")
    experiment.add_argument("--id", choices=EXPERIMENT_IDS,
                            help="Experiment (taken from the config file if "
                                 "omitted)")
    experiment.add_argument("--config", metavar="FILE",
                            help="INI configuration file")
    experiment.add_argument("-o", dest="overrides", action="append",
                            default=[], metavar="SECTION.KEY=VALUE",
                            help="Override a configuration value")
    experiment.add_argument("--seed", type=int, help="Master seed")
    experiment.add_argument("--out", metavar="DIR", help="Output directory")
    experiment.add_argument("--B", help="Comma separated delay bounds")
    experiment.add_argument("--trials", type=int)
    experiment.add_argument("--jobs", type=int,
                            help="Number of worker processes (default: one "
                            "per CPU for exp1 to exp4, 1 otherwise)")
    experiment.add_argument("--gnuplot", action="store_true",
                            help="Also write a gnuplot script")
    experiment.add_argument("--full-grid", action="store_true",
                            help="Extend the geometric B grid to 2^15")
    experiment.add_argument("--resume", action="store_true",
                            help="Continue an interrupted sweep")

    uav = subparsers.add_parser("uav-demo", help="Run the UAV formation demo")
    uav.add_argument("--B", type=int, default=DEFAULT_UAV_B)
    uav.add_argument("--seed", type=int, default=0)
    uav.add_argument("--variance", type=float, default=DEFAULT_VARIANCE)
    uav.add_argument("-o", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE")
    uav.add_argument("--trace", metavar="CSV")

    return parser


# Commands ####################################################################

def generate_command(args):
    generator = GeneratorConfig(args.graph_kind, args.n, args.k, args.p,
                                _parse_edges(args.edges), args.sheaf_kind,
                                args.dim, args.vertex_dim, args.edge_dim,
                                args.pd_probability)
    instance = GeneratedInstance(generator,
                                 derive_seed(args.seed, "graph"),
                                 derive_seed(args.seed, "sheaf"),
                                 derive_seed(args.seed, "potentials"),
                                 args.potentials, args.offset_mode,
                                 args.offset_scale, args.weight)
    if args.out:
        save_sheaf(args.out, instance.sheaf, instance.potentials)
        logger.info("Sheaf written to " + style.emph(args.out))
    else:
        print(json.dumps(sheaf_to_dict(instance.sheaf, instance.potentials),
                         indent=1, sort_keys=True))
    return EXIT_OK


def spectrum_command(args):
    instance = LoadedInstance(args.file)
    report = analyze(instance.sheaf, instance.potentials, args.zero_threshold)
    _print_props(report.to_props())
    if args.eigenvalues:
        write_csv(args.eigenvalues, ("index", "eigenvalue"),
                  enumerate(report.eigenvalues.tolist()))
    return EXIT_OK


def _policy(args):
    if args.gamma is not None and args.step_mode in (None, FIXED):
        return StepSizePolicy.fixed(args.gamma)
    return StepSizePolicy(args.step_mode or LIPSCHITZ,
                          args.gamma, args.safety)


def diffuse_command(args):
    instance = LoadedInstance(args.file)
    sheaf = instance.sheaf
    x0 = gaussian_initial_condition(sheaf, args.variance,
                                    derive_seed(args.seed, "init"))
    stop = StoppingRule(args.max_ticks, args.residual_tol, args.record_every)
    if args.sync:
        trace = run_sync(sheaf, instance.potentials, x0, _policy(args), stop,
                         instance.minimum, instance.report,
                         args.max_halvings)
    else:
        trace = run_async(sheaf, instance.potentials, x0, args.B,
                          _policy(args), stop,
                          rng_seed=derive_seed(args.seed, "schedule"),
                          std_ratio=args.std_ratio, minimum=instance.minimum,
                          report=instance.report,
                          max_halvings=args.max_halvings)

    fit = fit_contraction(trace)
    props = [("converged", trace.converged),
             ("t_star", trace.converged_at),
             ("ticks", trace.ticks),
             ("B", trace.B),
             ("gamma", trace.gamma),
             ("halvings", trace.halvings),
             ("f_star", trace.f_star),
             ("final_energy", trace.records[-1].energy),
             ("final_residual", trace.final_residual),
             ("rho", fit.rho),
             ("r_squared", fit.r_squared)]
    _print_props(props)

    if args.trace:
        trace.to_csv(args.trace)
    if args.meta:
        meta = dict(props)
        meta.update({"seed": args.seed, "variance": args.variance,
                     "sheaf": args.file, "metadata": trace.metadata})
        write_json(args.meta, meta)
    return EXIT_OK


def experiment_command(args):
    overrides = list(args.overrides)
    if args.B is not None:
        overrides.append("schedule.B=" + args.B)
    if args.trials is not None:
        overrides.append("experiment.trials=%d" % args.trials)
    if args.gnuplot:
        overrides.append("output.gnuplot=true")
    config = ExperimentConfig(args.id, args.config, overrides, args.seed,
                              args.out, args.full_grid)

    engine = ExperimentEngine(config, args.jobs, args.resume)
    summary = engine.run()
    _print_props(summary.to_props())
    return EXIT_OK


def uav_command(args):
    overrides = list(args.overrides) + ["schedule.B=%d" % args.B,
                                        "run.variance=%r" % args.variance,
                                        "experiment.trials=1"]
    config = ExperimentConfig("uav", overrides=overrides, seed=args.seed)
    experiment = UavExperiment(config)
    result, trace = experiment.run_combination(experiment.combinations()[0])
    if result["status"] == DIVERGED:
        logger.error("The UAV formation diverged")
        return EXIT_DIVERGED

    _print_props([("converged", result["status"] == CONVERGED),
                  ("t_star", result["t_star"]),
                  ("formation_energy", result["formation_energy"]),
                  ("max_formation_error", result["max_formation_error"]),
                  ("velocity_error", result["velocity_error"])])
    if args.trace:
        trace.to_csv(args.trace)
    return EXIT_OK


COMMANDS = {
    "generate": generate_command,
    "spectrum": spectrum_command,
    "diffuse": diffuse_command,
    "experiment": experiment_command,
    "uav-demo": uav_command
}


def cli_main(argv):
    """Run the command line and return its exit code.

    Args:
      argv (list of str):
        The arguments, without the program name.

    Returns (int):
      The exit code.
    """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.verbose:
        logger.setLevel(logging.DEBUG)
    elif args.quiet:
        logger.setLevel(logging.WARNING)

    try:
        return COMMANDS[args.command](args)
    except StepSizeException as e:
        logger.error("Diffusion diverged: " + str(e))
        return EXIT_DIVERGED
    except SheafException as e:
        logger.error(style.emph(args.command) + " failed: " + str(e))
        return EXIT_ERROR
    except (IOError, OSError) as e:
        logger.error(style.emph(args.command) + " failed: " + str(e))
        return EXIT_ERROR


def main():
    sys.exit(cli_main(sys.argv[1:]))
