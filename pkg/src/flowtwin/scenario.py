"""Counterfactual orchestration: run the online phase under an intervention.

The trained model is never retrained here; the intervention only modifies
the environment view handed to the simulator, and the departure schedule
from the offline phase is reused as-is.
"""

from __future__ import annotations

from .environment import EnvironmentView, InterventionSpec, apply_intervention
from .microsim import SocialForceParams, run_simulation


def run_counterfactual(model, base_env: EnvironmentView, spec: InterventionSpec,
                       departures, sf_params: SocialForceParams | None = None,
                       seed: int = 0, **sim_kwargs):
    """Simulate the same departures under a modified environment.

    Returns (records, population series); records and series are tagged via
    the returned environment label in ``sim_kwargs`` metadata conventions of
    the caller.  With an empty spec this is bit-identical to a baseline run
    at the same seed, since the RNG streams depend only on the seed.
    """
    env = apply_intervention(base_env, spec)
    return run_simulation(env, departures, model, sf_params=sf_params,
                          seed=seed, **sim_kwargs)
