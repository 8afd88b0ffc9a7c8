"""Task-free graph condensation with transport-based distribution matching."""

from .condense import CondenseResult, TrainConfig, condense
from .errors import InvalidInputError, NumericalError, ParseError, PreGCError, StabilityError
from .evaluation import TaskSpec, evaluate, lre, sgc_closed_form, train_head
from .graph import CondensedGraph, Graph, Splits, sbm_generate, two_block_centers
from .harmonize import discretize_plan, harmonize_labels, node_significance
from .ot import OtConfig, TransportPlan, fgw_plan, sinkhorn, wasserstein_plan

__version__ = "0.1.0"

__all__ = [
    "CondenseResult",
    "CondensedGraph",
    "Graph",
    "InvalidInputError",
    "NumericalError",
    "OtConfig",
    "ParseError",
    "PreGCError",
    "Splits",
    "StabilityError",
    "TaskSpec",
    "TrainConfig",
    "TransportPlan",
    "condense",
    "discretize_plan",
    "evaluate",
    "fgw_plan",
    "harmonize_labels",
    "lre",
    "node_significance",
    "sbm_generate",
    "two_block_centers",
    "sgc_closed_form",
    "sinkhorn",
    "train_head",
    "wasserstein_plan",
]
