"""This module provides the classes and functions to build cellular sheaves,
run synchronous and partially asynchronous sheaf diffusion on them and
reproduce experiments over the resulting traces.
"""

from sheaf_diffusion.objects import Graph, CellularSheaf, Cochain0, \
    Cochain1, SheafException, StructuralException, ConfigurationException, \
    ParameterException, StepSizeException, GenerationException, \
    SpectralException
from sheaf_diffusion.sheaf import coboundary_apply, linear_laplacian, \
    nonlinear_laplacian_apply, local_laplacian_block, global_sections
from sheaf_diffusion.potentials import QuadraticPotential, \
    OffsetQuadraticPotential, ScaledQuadraticPotential, PotentialSet, \
    dirichlet_energy, energy_minimum
from sheaf_diffusion.spectral import spectrum, analyze, eb_constant, \
    project_onto_minimizers
from sheaf_diffusion.diffusion import StepSizePolicy, StoppingRule, \
    AsyncSchedule, DiffusionTrace, run_sync, run_async
from sheaf_diffusion.engine.engine import ExperimentEngine
from sheaf_diffusion.engine.config import ExperimentConfig
