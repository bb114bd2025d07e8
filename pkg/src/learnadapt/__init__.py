"""Learn-and-adapt stochastic dual solvers for MN/DC workload allocation."""

from .dual import DualProblem, RegularizedDual, dual_gradient, dual_value, primal_minimizer
from .network import Allocation, StateSample, Topology, build_incidence
from .scenario import SampleStream, ScenarioConfig, StateBatch, default_config_large, default_config_small
from .solvers import GradientTable, OnlineConfig, SolverTrace, offline_saga, online_saga, sdg_plus_run, sdg_run

__version__ = "0.1.0"
