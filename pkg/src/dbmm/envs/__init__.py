"""Benchmark simulators and exact belief oracles."""

from .continuous import (
    ContinuousEnv,
    DEFAULT_CONTINUOUS,
    ContinuousMaintenanceModel,
    cont_deterioration,
    cont_step,
    cont_true_next_distribution,
)
from .discrete import (
    DiscreteEnv,
    DiscretePOMDPModel,
    bridge_model,
    discrete_reset,
    discrete_step,
    exact_belief_propagate,
    exact_belief_update,
    exact_initial_belief,
    hmm_log_likelihood,
)
from .railway import (
    RailwayEnv,
    RailwayModelConfig,
    load_railway_config,
    railway_config_from_dict,
    railway_exact_belief_update,
    railway_obs_log_likelihood,
    railway_reset,
    railway_step,
)
from .truncated import ts_log_pdf, ts_sample

__all__ = [
    "ContinuousEnv", "ContinuousMaintenanceModel", "DEFAULT_CONTINUOUS", "cont_deterioration", "cont_step",
    "cont_true_next_distribution", "DiscreteEnv", "DiscretePOMDPModel", "bridge_model",
    "discrete_reset", "discrete_step", "exact_belief_propagate", "exact_belief_update",
    "exact_initial_belief",
    "hmm_log_likelihood", "RailwayEnv", "RailwayModelConfig", "load_railway_config",
    "railway_config_from_dict", "railway_exact_belief_update", "railway_reset", "railway_step",
    "railway_obs_log_likelihood", "ts_log_pdf", "ts_sample",
]
