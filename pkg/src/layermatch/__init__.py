"""Heterogeneous transfer learning through coupled stacked autoencoders.

Two networks of independently chosen depths are trained jointly; chosen
hidden layers are tied by canonical-correlation terms, and the layer
pairing itself is selected by exhaustive search over a unified
reconstruction-over-correlation objective.  A linear SVM on the shared
top subspace carries labels from the source domain to the target.
"""

from ._backend import available_backends, get_backend
from .cca import CcaProjection, correlation_score, covariances, solve_cca
from .classify import SvmModel, aggregate_category_accuracy, predict, train_svm
from .data import (
    Domain,
    DomainDataset,
    TrialSplit,
    load_labeled_csv,
    load_multifeatures,
    split_trial,
    standardize,
)
from .exceptions import LoadError, NumericError
from .harness import ExperimentConfig, neuron_sweep, run_baseline_ccasvm, run_experiment
from .matcher import (
    MatchingPlan,
    TrainConfig,
    TrainedModel,
    enumerate_matchings,
    evaluate_objective,
    select_best,
    train_joint,
)
from .sae import NetworkParams, SaeHyperParams, forward, gradient_check, init_network

__version__ = "0.1.0"

__all__ = [
    "available_backends",
    "get_backend",
    "CcaProjection",
    "correlation_score",
    "covariances",
    "solve_cca",
    "SvmModel",
    "aggregate_category_accuracy",
    "predict",
    "train_svm",
    "Domain",
    "DomainDataset",
    "TrialSplit",
    "load_labeled_csv",
    "load_multifeatures",
    "split_trial",
    "standardize",
    "LoadError",
    "NumericError",
    "ExperimentConfig",
    "neuron_sweep",
    "run_baseline_ccasvm",
    "run_experiment",
    "MatchingPlan",
    "TrainConfig",
    "TrainedModel",
    "enumerate_matchings",
    "evaluate_objective",
    "select_best",
    "train_joint",
    "NetworkParams",
    "SaeHyperParams",
    "forward",
    "gradient_check",
    "init_network",
    "__version__",
]
