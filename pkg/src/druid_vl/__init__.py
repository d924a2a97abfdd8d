"""Asynchronous distributed ADMM with local stochastic Newton solvers.

Agents on an undirected graph jointly minimize a sum of local logistic
losses plus an L1 penalty held by one agent. Each round an arbitrary
subset of agents runs a few stochastic Newton steps on its perturbed
augmented-Lagrangian block and broadcasts the result to its neighbours.
"""

from .data import AgentShard, Dataset, ijcnn1_like, make_synthetic, parse_libsvm, partition
from .local_solver import SolverKind, run_local
from .metrics import RoundRecord, flop_cost, rounds_to_error
from .oracle import protocol_optimum, relative_error, solve_centralized
from .protocol import Streams, run_matrix_reference, run_round, simulate, tune_epsilons
from .state import AgentState, HyperParams, MatrixState, RegularizerState
from .topology import Topology, from_edges, generate_erdos_renyi, spectral_constants

__version__ = "0.1.0"
