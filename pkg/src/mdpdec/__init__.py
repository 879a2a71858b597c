"""Certified bounds for optimal reachability probabilities in denumerable MDPs."""

from .core import (
    ActionLabel,
    AvoidStatus,
    Distribution,
    FiniteMdp,
    Model,
    Opt,
    PurePositionalScheduler,
    SamplePath,
    Sink,
    StateRef,
    TerminalReason,
    avoid_status,
    enabled,
    simulate,
    successors,
    validate_distribution,
)
from .errors import MdpError
from .exact import exact_oracle
from .io import load_finite_model, read_finite_model, serialize_finite_model
from .lcs import LcsSystem, LoseAllWithProb, PerMessageIID, embed_lcs, lcs_step
from .mec import check_sup_decisive_finite, mec_decomposition
from .schemes import (
    BoundsTrace,
    SolveResult,
    Status,
    approx_scheme1,
    approx_scheme2,
    estimate_decisiveness,
    refinement_check,
    solve,
)
from .solver import BoundedObjective, bounded_reach, qualitative_states, solve_reach_finite
from .transform import collapse, compute_avoid_finite, explore, slice
from .zoo import MrParams, WalkParams, make_ml, make_mr, make_random_walk, make_three_state

__version__ = "0.1.0"
