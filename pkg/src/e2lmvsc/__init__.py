"""Deep multi-view subspace clustering with an information-bottleneck unified
representation, coding-rate discrimination and a metric self-expression layer.

Submodules: ``numcore`` (linear algebra, autodiff, Adam), ``dataio``,
``model``, ``losses``, ``cluster`` and ``pipeline``.
"""

from . import cluster, dataio, losses, model, numcore, pipeline
from .errors import E2LMVSCError, InputError, NumericalError
from .pipeline import RunReport, TrainConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "E2LMVSCError",
    "InputError",
    "NumericalError",
    "RunReport",
    "TrainConfig",
    "cluster",
    "dataio",
    "losses",
    "model",
    "numcore",
    "pipeline",
    "run_experiment",
]
