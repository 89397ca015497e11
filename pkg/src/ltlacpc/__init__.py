"""Policy synthesis for labeled MDPs under LTL constraints with an average
cost per cycle objective, plus PAC-style model learning."""

from .errors import (
    AssumptionViolation,
    BudgetExhausted,
    DivergentACPC,
    LTLSyntaxError,
    ModelError,
    StructureViolation,
    UnsupportedFragment,
)
from .mdp import LabeledMDP, compose_all, load_mdp, make_mdp, parallel_compose, validate
from .automata import DRA, dra_accepts, load_dra, parse_ltl, translate_fragment
from .product import ProductMDP, build_product, project_policy
from .graph import (
    EndComponent,
    accepting_mecs,
    compute_cycle_bound,
    entrance,
    max_reach_probability,
    maximal_end_components,
)
from .acpc import (
    evaluate_acpc,
    evaluate_t_cycle_acpc,
    estimate_mixing_cycle,
    optimize_acpc,
    optimize_t_cycle,
)

__version__ = "0.1.0"
