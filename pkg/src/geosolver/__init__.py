"""geosolver: forward-chaining plane-geometry solving with a hypergraph state."""

from .algebra import AlgebraSystem, SolveResult, SolveStatus
from .formal import (
    FormalSystem,
    Goal,
    Problem,
    TermTree,
    TheoremDef,
    detokenize,
    parse_problem,
    parse_system,
    parse_term,
    render_term,
    tokenize,
)
from .hypergraph import (
    SerializedGraph,
    SolutionHypergraph,
    StepSample,
    build_hypergraph,
    difficulty_level,
    extract_theorem_dag,
    generate_step_samples,
    random_topological_sort,
    serialize_for_predictor,
)
from .reasoner import (
    ProblemState,
    applicable_theorems,
    apply_theorem,
    check_goal,
    match_theorem,
)
from .search import (
    Beam,
    FrequencyPredictor,
    OraclePredictor,
    RandomPredictor,
    RemotePredictor,
    SearchResult,
    SearchStatus,
    beam_step,
    greedy_beam_step,
    pac_solve,
)
from .store import Condition, ConditionStore, HyperedgeLabel, canonicalize

__version__ = "0.1.0"
