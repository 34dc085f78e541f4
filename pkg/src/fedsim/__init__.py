"""fedsim: a deterministic federated-learning simulator for studying Mavericks.

Mavericks are clients that (almost) exclusively own some classes. The package
measures their contribution (leave-one-out influence, exact Shapley values,
data-size fairness) and selects clients with FedEMD, an EMD-driven weighted
sampler, alongside several baseline selection strategies.
"""

from fedsim.config import SimulationConfig, config_from_dict, load_config
from fedsim.orchestrator import RunResult, compare_runs, r_at_threshold, run_simulation

__version__ = "0.1.0"

__all__ = [
    "SimulationConfig",
    "config_from_dict",
    "load_config",
    "RunResult",
    "compare_runs",
    "r_at_threshold",
    "run_simulation",
    "__version__",
]
