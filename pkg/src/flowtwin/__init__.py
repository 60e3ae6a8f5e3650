"""flowtwin: a pedestrian digital twin for mobility-introduction planning.

Pipeline: reconstruct demand from spot counts and OD priors, refine it with
a Social Force microsimulation, train destination-choice models from the
resulting decision records, then predict counterfactual circulation under
mobility interventions without retraining.
"""

__version__ = "0.1.0"

from .environment import (
    EnvironmentView,
    InterventionSpec,
    apply_intervention,
    baseline_environment,
    effective_travel_time,
    normalize_attractions,
)
from .network import Area, MobilityLink, Network, PoI
from .scenario import run_counterfactual

__all__ = [
    "Area",
    "EnvironmentView",
    "InterventionSpec",
    "MobilityLink",
    "Network",
    "PoI",
    "apply_intervention",
    "baseline_environment",
    "effective_travel_time",
    "normalize_attractions",
    "run_counterfactual",
    "__version__",
]
