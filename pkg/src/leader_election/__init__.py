"""Leader election from weak coin flips: construction, exact analysis, simulation."""

from .analysis import (
    AnalysisReport,
    all_honest_probabilities,
    analyze,
    coalition_upper_bound,
    honest_worst_case,
    honest_worst_case_all,
    structural_counts,
    total_rounds,
    verify_honest_bound,
)
from .flip_core import (
    ConstructionError,
    ContractError,
    FlipSpec,
    Outcome,
    RoundsModel,
    UnbalancedPlan,
    build_unbalanced_plan,
    evaluate_plan_exact,
    plan_rounds,
    resolve_flip,
)
from .protocols import (
    Leaf,
    Match,
    ProtocolVariant,
    build,
    build_linear,
    build_recursive,
    build_seven,
    build_three,
    epsilon_prime,
)
from .simulator import SimulationResult, StrategyProfile, compare_to_exact, simulate

__version__ = "0.1.0"
