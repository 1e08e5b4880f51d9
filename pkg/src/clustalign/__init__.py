"""Clustered ad hoc network success-probability toolkit.

Monte-Carlo simulation and semi-analytical calculation of transmission
success probability for networks whose transmitters form a Poisson
cluster process and cooperate inside each cluster through spatial
interference alignment.
"""

from clustalign.alignment import is_feasible, solve_ia
from clustalign.analysis import (
    NetworkParams,
    QuadratureParams,
    QuadResult,
    ppp_baseline,
    success_prob_ia,
    success_prob_siso,
    upper_bound_1d,
    upper_bound_closed_form,
)
from clustalign.montecarlo import Mode, TrialConfig, estimate_success
from clustalign.pointprocess import ClusterConfig, PalmRealization, ScatterKernel

__all__ = [
    "ClusterConfig",
    "Mode",
    "NetworkParams",
    "PalmRealization",
    "QuadResult",
    "QuadratureParams",
    "ScatterKernel",
    "TrialConfig",
    "estimate_success",
    "is_feasible",
    "ppp_baseline",
    "solve_ia",
    "success_prob_ia",
    "success_prob_siso",
    "upper_bound_1d",
    "upper_bound_closed_form",
]

__version__ = "0.1.0"
