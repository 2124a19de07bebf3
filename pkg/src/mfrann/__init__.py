"""Adaptive multi-fidelity optimization with ensembles of rapidly trained
emulator-embedded neural networks, plus a kriging baseline."""

from .acquisition import Incumbent, ei_gaussian, ei_numeric_oracle, ei_student_t, ei_t
from .adaptive import AdaptiveSettings, RunState, run_adaptive
from .benchmarks import BenchmarkProblem, get_problem
from .data import Dataset
from .ensemble import (
    Ensemble,
    EnsembleConfig,
    NormalInvChiSquared,
    TPrediction,
    build_ensemble,
    conjugate_posterior,
    posterior_predictive,
)
from .errors import EnsembleCollapse
from .kriging import GprSettings, gpr_fit, gpr_predict, run_ego
from .network import ActivationKind, Architecture, E2nnModel, Emulator, ModelConfig

__version__ = "0.1.0"
