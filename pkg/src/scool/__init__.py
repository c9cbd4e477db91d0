"""scool: desk-scale structured cooperative learning.

K simulated clients alternately train personalized models and infer a
cooperation graph by variational EM under pluggable graphical-model priors
(fixed/Dirac, stochastic block model, attention, mixed-membership SBM).
"""

from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigurationError, DivergenceError, InvariantError, ScoolError
from .models import ArchSpec, Dataset, LocalModel, accuracy, grad, log_likelihood, loss
from .runner import ExperimentReport, metric_l1, run_budget_sweep, run_experiment
from .special import digamma, log_gamma, row_normalize, sigmoid_tempered, softmax_tempered
from .tasks import TaskAssignment, TaskUniverse, gen_noniid_random, gen_noniid_sbm, sample_class_data
from .topology import CommLedger, Topology, account_exchange, build_topology, sparsify_topk

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "CommLedger",
    "ConfigurationError",
    "Dataset",
    "DivergenceError",
    "ExperimentConfig",
    "ExperimentReport",
    "InvariantError",
    "LocalModel",
    "ScoolError",
    "TaskAssignment",
    "TaskUniverse",
    "Topology",
    "account_exchange",
    "accuracy",
    "build_topology",
    "digamma",
    "gen_noniid_random",
    "gen_noniid_sbm",
    "grad",
    "load_config",
    "log_gamma",
    "log_likelihood",
    "loss",
    "metric_l1",
    "row_normalize",
    "run_budget_sweep",
    "run_experiment",
    "sample_class_data",
    "save_config",
    "sigmoid_tempered",
    "softmax_tempered",
    "sparsify_topk",
]
