"""Gossip-based distributed linear parameter estimation over failing networks.

A network of sensors, each observing only a slice of an unknown static
vector, runs a two-potential recursion: a consensus term pulling each
estimate toward the neighbors it manages to gossip with this iteration,
and an innovation term injecting its own new observation.  With the
consensus weight decaying strictly slower than the innovation weight,
every sensor's estimate converges to the truth whenever the pooled
observation map is full rank and the network is connected on average,
and matches the asymptotic covariance of the centralized estimator that
sees everything.  This package simulates the recursion, its centralized
baseline, and the analysis tools to verify those claims numerically.
"""

from .analysis import (AsymptoticCovariance, NormalityReport, QuadraticFormBound, RateFit,
                       asymptotic_covariance, covariance_by_quadrature, normality_check,
                       optimal_gain, quadratic_form_bound, rate_fit, scalar_recursion,
                       solve_lyapunov)
from .errors import (ConfigError, InsufficientDataError, ModelError, NumericalError,
                     ObservabilityError, StabilityError)
from .estimators import (CentralState, CentralizedParams, DistributedParams, NetworkState,
                         centralized_step, consensus_weight, distributed_step,
                         initial_network_state, innovation_weight, network_average,
                         validate_centralized_params, validate_distributed_params)
from .graphs import (BernoulliLinkFailure, FixedTopology, Graph, Laplacian, PairwiseGossip,
                     check_mean_connectivity, complete_graph, erdos_renyi_graph, fiedler_value,
                     laplacian, mean_laplacian, path_graph, read_edge_list, ring_graph,
                     sample_topology, write_edge_list)
from .harness import (ExperimentConfig, ExperimentResult, TrialRecord, aggregate,
                      run_experiment, run_trial, validate_config)
from .sensing import (SensingModel, StackedObservation, check_global_observability,
                      fading_gain, grammian, innovation_dispersion, sample_observation)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
