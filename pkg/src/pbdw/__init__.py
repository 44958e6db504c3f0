"""Certified state and parameter estimation from reduced models.

Recovery of PDE states from finitely many sensor readings, with
computable worst-case certificates: one-space (reduced-basis) recovery,
worst-case-optimal affine maps fitted on manifold nets, certified
piecewise-affine partitions of the parameter box, metric projection for
parameter estimation, and brute-force oracles for benchmark bounds.
"""

__version__ = "0.1.0"

from .affine import (AffineRecoveryEstimator, ManifoldNet, build_complement,
                     d_width_proxy, estimate_delta, net_from_grid,
                     net_from_training)
from .config import ExperimentConfig, load_config, parse_config
from .exceptions import (BudgetError, ConfigError, IngestError, PbdwError,
                         RankDeficiencyError, SolverError,
                         UnstableRecoveryError)
from .greedy import (GreedyReducedBasis, GreedyTrace, PoorMansResult,
                     TrainingSet, greedy_hierarchy, poor_mans_select,
                     random_training, sparse_random_training,
                     stopping_threshold, tensor_grid_training, weak_greedy)
from .inverse import (LsConfig, ParameterEstimate, ProjectionResult,
                      estimate_parameter, metric_project)
from .minimax import MinimaxSolution, solve_minimax
from .model import ModelConfig, ParametricModel, build_model
from .onespace import OneSpaceEstimator, ReducedSpace, beta_mu
from .oracle import (BenchmarkReport, delta_eps_bruteforce, manifold_net,
                     run_benchmark, slice_and_radius, wc_error_bruteforce)
from .piecewise import (Cell, PartitionBudget, PartitionedModel,
                        PiecewiseAffineEstimator, build_partition,
                        recover_pw)
from .sensing import (MeasurementSystem, NoiseSpec, Observation, SensorSpec,
                      build_system, equispaced_average_sensors,
                      equispaced_box_sensors)
from .space import DiscreteSpace

__all__ = [
    "__version__",
    "AffineRecoveryEstimator", "ManifoldNet", "build_complement",
    "d_width_proxy", "estimate_delta", "net_from_grid", "net_from_training",
    "ExperimentConfig", "load_config", "parse_config",
    "BudgetError", "ConfigError", "IngestError", "PbdwError",
    "RankDeficiencyError", "SolverError", "UnstableRecoveryError",
    "GreedyReducedBasis", "GreedyTrace", "PoorMansResult", "TrainingSet",
    "greedy_hierarchy", "poor_mans_select", "random_training",
    "sparse_random_training", "stopping_threshold", "tensor_grid_training",
    "weak_greedy",
    "LsConfig", "ParameterEstimate", "ProjectionResult",
    "estimate_parameter", "metric_project",
    "MinimaxSolution", "solve_minimax",
    "ModelConfig", "ParametricModel", "build_model",
    "OneSpaceEstimator", "ReducedSpace", "beta_mu",
    "BenchmarkReport", "delta_eps_bruteforce", "manifold_net",
    "run_benchmark", "slice_and_radius", "wc_error_bruteforce",
    "Cell", "PartitionBudget", "PartitionedModel",
    "PiecewiseAffineEstimator", "build_partition", "recover_pw",
    "MeasurementSystem", "NoiseSpec", "Observation", "SensorSpec",
    "build_system", "equispaced_average_sensors", "equispaced_box_sensors",
    "DiscreteSpace",
]
