"""Bidirectional bond percolation on Galton-Watson trees.

Simulation of information-spread clusters, closed-form moments and tail
bounds, and an exhaustive-enumeration oracle on small trees.
"""
from gwperc.analytics import (
    ExactReport,
    chebyshev_tail_bound,
    d_moments,
    diameter_tail_bound,
    excluded_subtree_moments,
    exact_report,
    expected_front_profile,
    first_moment,
    first_moment_symmetric,
    nu_moments,
    second_moment_infinite,
    sigma_moments,
    subtree_moments,
)
from gwperc.montecarlo import ExperimentResult, MomentEstimate, compare, merge, run_experiment
from gwperc.offspring import OffspringDistribution, make_distribution, sample_offspring
from gwperc.oracle import ExplicitTree, build_deterministic_tree, enumerate_exact
from gwperc.simulator import ClusterObservation, Scenario, sample_cluster, tree_diameter
from gwperc.streams import Stream

__version__ = "0.1.0"

__all__ = [
    "ClusterObservation",
    "ExactReport",
    "ExperimentResult",
    "ExplicitTree",
    "MomentEstimate",
    "OffspringDistribution",
    "Scenario",
    "Stream",
    "build_deterministic_tree",
    "chebyshev_tail_bound",
    "compare",
    "d_moments",
    "diameter_tail_bound",
    "enumerate_exact",
    "exact_report",
    "excluded_subtree_moments",
    "expected_front_profile",
    "first_moment",
    "first_moment_symmetric",
    "make_distribution",
    "merge",
    "nu_moments",
    "run_experiment",
    "sample_cluster",
    "sample_offspring",
    "second_moment_infinite",
    "sigma_moments",
    "subtree_moments",
    "tree_diameter",
]
