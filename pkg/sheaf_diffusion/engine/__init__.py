from sheaf_diffusion.engine.engine import ExperimentEngine
from sheaf_diffusion.engine.config import ExperimentConfig
from sheaf_diffusion.engine.instances import Instance, GeneratedInstance, \
    LoadedInstance, UavInstance
from sheaf_diffusion.engine.experiments import fit_contraction, \
    run_experiment1, run_experiment2, run_experiment3, run_experiment4
