"""Interference nulling on shared passive reflecting surfaces.

Core objects: build a multi-cell channel draw (:mod:`risnull.channel`),
stack its cross-stream interference equations, search for unit-modulus
phases solving them (:mod:`risnull.nulling`), evaluate and maximize sum
rates (:mod:`risnull.rates`), predict how many surface elements are needed
(:mod:`risnull.thresholds`), and run reproducible experiment sweeps
(:mod:`risnull.harness`, ``risnull`` CLI).
"""

from .channel import (
    ChannelRealization,
    GeometryScenario,
    NullingSystem,
    PowerAllocation,
    SystemConfig,
    assemble_nulling_system,
    cascade,
    sample_channels,
    sample_geometric,
    surrogate_system,
    uniform_power,
)
from .harness import (
    SweepSpec,
    SweepResult,
    derive_trial_seed,
    feasibility_sweep,
    quantile_boundary,
    rate_sweep,
    run_rate_trial,
)
from .nulling import (
    ApOptions,
    SolveOutcome,
    alternating_projection,
    project_affine,
    project_torus,
    residual,
)
from .rates import (
    AscentOptions,
    RateInputs,
    estimate_dof,
    euclidean_gradient,
    rate_inputs_from_realization,
    rcg_maximize,
    sum_rate,
)
from .thresholds import (
    ThresholdConfig,
    ThresholdReport,
    antenna_collab_feasible,
    evs_moments,
    necessary_n_gordon,
    rank_evidence,
    refined_threshold,
    sufficient_n,
    threshold_report,
    transition_eta,
)

__version__ = "0.1.0"
