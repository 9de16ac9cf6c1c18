"""Spatiotemporal k-means: moving-cluster detection over object trajectories."""
from ._backend import BACKEND
from .core import (
    UNASSIGNED,
    AssignmentHistory,
    CenterTensor,
    Partition,
    Phase2Config,
    SolverConfig,
    TrajectoryTensor,
    WeightTensor,
    flatten,
    validate,
)
from .datagen import ScenarioConfig, generate
from .metrics import ami, long_term_ami, total_ami
from .phase2 import extract_assignments, long_term_center_paths, long_term_clusters
from .solver import FitResult, fit, fit_robust

__version__ = "0.1.0"
