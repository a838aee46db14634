"""Reachability of neural-network control loops through reduced-size controllers.

A large controller network is replaced by a small one plus a certified bound
on their output gap; reachable sets computed with the small network, padded
by that bound, cover the behaviour of the large one.
"""

__version__ = "0.1.0"

from .closed_loop import (Halfspace, ReachConfig, SafetySpec, SampledNNCS, VerificationResult,
                          reach_nncs, verify)
from .errors import (BudgetError, ConfigError, EnclosureError, InputShapeError, NetworkParseError,
                     NNReduceError, PrecisionDomainError, PreconditionError, RepresentationError,
                     SimulationError, TrainingError)
from .network import (Activation, Layer, Network, evaluate, load_network, random_network,
                      save_network, validate)
from .ode import Dynamics, ReachTube, StepConfig, linear_dynamics, reach_ode_x, reach_ode_y
from .reach import PartitionConfig, partition, reach_nn
from .reduction import InflationMode, Precision, augment, distill, inflate, precision, sampled_gap
from .sets import BoxUnion, IntervalBox, hull
from .simulate import Trajectory, containment_audit, simulate, simulate_batch

__all__ = [
    "Activation", "BoxUnion", "BudgetError", "ConfigError", "Dynamics", "EnclosureError",
    "Halfspace", "InflationMode", "InputShapeError", "IntervalBox", "Layer", "NNReduceError",
    "Network", "NetworkParseError", "PartitionConfig", "Precision", "PrecisionDomainError",
    "PreconditionError", "ReachConfig", "ReachTube", "RepresentationError", "SafetySpec",
    "SampledNNCS", "SimulationError", "StepConfig", "Trajectory", "TrainingError",
    "VerificationResult", "augment", "containment_audit", "distill", "evaluate", "hull", "inflate",
    "linear_dynamics", "load_network", "partition", "precision", "random_network", "reach_nn",
    "reach_nncs", "reach_ode_x", "reach_ode_y", "sampled_gap", "save_network", "simulate",
    "simulate_batch", "validate",
]
