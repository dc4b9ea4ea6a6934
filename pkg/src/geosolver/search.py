"""The predict-apply cycle and the candidate-selection strategies.

Each cycle serializes the current state(s), asks the predictor for
theorem scores, selects candidates per strategy (rs, bfs, dfs, bs, gb),
applies them, and stops on solved / nothing-applied / timeout.  Plain
beam search keeps inapplicable children as dead slots; greedy beam
replaces them with the next-ranked products so every surviving head made
progress.
"""

from __future__ import annotations

import random
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .formal import FormalSystem, Problem
from .hypergraph import (
    SerializedGraph,
    build_hypergraph,
    extract_theorem_dag,
    serialize_for_predictor,
)
from .protocol import PredictorClient, ProtocolError
from .reasoner import (
    DEFAULT_GOAL_BUDGET_MS,
    DEFAULT_MATCH_BUDGET_MS,
    ProblemState,
    apply_theorem,
    applicable_theorems,
    check_goal,
    match_theorem,
)

STRATEGIES = ("rs", "bfs", "dfs", "bs", "gb")


class SearchStatus(Enum):
    SOLVED = "Solved"
    UNSOLVED = "Unsolved"
    TIMEOUT = "Timeout"
    PREDICTOR_ERROR = "predictor_error"


@dataclass
class SearchResult:
    status: SearchStatus
    theorem_seqs: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    nodes_expanded: int = 0
    value: object | None = None


class Predictor:
    """Scores a serialized state over the M-theorem vocabulary."""

    def score(self, graph: SerializedGraph) -> list[float]:
        raise NotImplementedError

    def score_state(self, state: ProblemState, history: list[str], graph: SerializedGraph) -> list[float]:
        return self.score(graph)

    def close(self) -> None:
        pass


class RandomPredictor(Predictor):
    def __init__(self, m: int, seed: int = 0):
        self.m = m
        self.rng = random.Random(seed)

    def score(self, graph: SerializedGraph) -> list[float]:
        return [self.rng.random() for _ in range(self.m)]


class FrequencyPredictor(Predictor):
    """Static scores proportional to theorem frequency in corpus annotations."""

    def __init__(self, weights: list[float]):
        total = sum(weights)
        self.weights = [w / total for w in weights] if total > 0 else [1.0 / len(weights)] * len(weights)

    @classmethod
    def from_corpus(cls, problems: list[Problem], system: FormalSystem) -> "FrequencyPredictor":
        counts = [1.0] * system.num_theorems  # add-one smoothing
        for problem in problems:
            for name, _ in problem.theorem_seq:
                counts[system.theorem_index[name]] += 1.0
        return cls(counts)

    def score(self, graph: SerializedGraph) -> list[float]:
        return list(self.weights)


class OraclePredictor(Predictor):
    """Probability 1 on the first annotated theorem still applicable."""

    def __init__(self, problem: Problem, system: FormalSystem):
        self.problem = problem
        self.system = system

    def score_state(self, state: ProblemState, history: list[str], graph: SerializedGraph) -> list[float]:
        scores = [0.0] * self.system.num_theorems
        for name, _ in self.problem.theorem_seq:
            if match_theorem(self.system.theorem(name), state):
                scores[self.system.theorem_index[name]] = 1.0
                return scores
        return [1.0] * self.system.num_theorems  # annotation exhausted

    def score(self, graph: SerializedGraph) -> list[float]:
        raise NotImplementedError("the oracle needs state context")

    def score_sample(self, truth: set[str]) -> list[float]:
        return [
            1.0 if t.name in truth else 0.0
            for t in self.system.theorems
        ]


class RemotePredictor(Predictor):
    """Wire-protocol client predictor; see the protocol module."""

    def __init__(self, addr: str, theorems: list[str]):
        self.client = PredictorClient.connect(addr)
        self.client.handshake(theorems)

    def score(self, graph: SerializedGraph) -> list[float]:
        return self.client.score(graph.to_payload())

    def close(self) -> None:
        self.client.close()


def normalize_scores(scores: list[float]) -> list[float]:
    clipped = [max(0.0, float(s)) for s in scores]
    total = sum(clipped)
    if total <= 0.0:
        return [1.0 / len(clipped)] * len(clipped)
    return [s / total for s in clipped]


@dataclass
class Beam:
    state: ProblemState
    p: float
    history: list[str]
    alive: bool = True


def beam_step(beams: list[Beam], scores_per_beam: list[list[float]], k: int, expander) -> list[Beam]:
    """Plain beam step: top-k of all p_i * p_j products.

    Ties break toward the lower theorem index, then the lower beam index.
    Children whose expansion fails are kept as dead slots.
    """
    candidates = []
    for bi, (beam, scores) in enumerate(zip(beams, scores_per_beam)):
        for ti, s in enumerate(scores):
            candidates.append((beam.p * s, ti, bi))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    children = []
    for product, ti, bi in candidates[:k]:
        state, applied = expander(beams[bi], ti)
        children.append(Beam(state, product, beams[bi].history + [_name(expander, ti)], alive=applied))
    return children


def greedy_beam_step(beams: list[Beam], scores_per_beam: list[list[float]], k: int, expander) -> list[Beam]:
    """Greedy beam: discard inapplicable candidates, refill from the ranking."""
    candidates = []
    for bi, (beam, scores) in enumerate(zip(beams, scores_per_beam)):
        for ti, s in enumerate(scores):
            candidates.append((beam.p * s, ti, bi))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    children = []
    for product, ti, bi in candidates:
        if len(children) >= k:
            break
        state, applied = expander(beams[bi], ti)
        if applied:
            children.append(Beam(state, product, beams[bi].history + [_name(expander, ti)]))
    return children


def _name(expander, ti: int) -> str:
    names = getattr(expander, "theorem_names", None)
    return names[ti] if names else str(ti)


def _prune_history(state: ProblemState) -> list[str]:
    """The cycles that contributed a goal-ancestor hyperedge, in order."""
    dag = extract_theorem_dag(build_hypergraph(state))
    needed_steps = sorted({label.step for label in dag.vertices})
    step_to_name: dict[int, str] = {}
    for label in state.applied:
        step_to_name[label.step] = label.theorem
    return [step_to_name[s] for s in needed_steps if s in step_to_name]


def pac_solve(
    problem: Problem,
    system: FormalSystem,
    predictor: Predictor,
    strategy: str = "gb",
    k: int = 1,
    timeout_s: float = 600.0,
    seed: int = 0,
    match_budget_ms: float = DEFAULT_MATCH_BUDGET_MS,
    goal_budget_ms: float = DEFAULT_GOAL_BUDGET_MS,
) -> SearchResult:
    """Run the predict-apply cycle until solved, stuck, or out of time."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if k < 1:
        raise ValueError("beam size must be >= 1")
    start = time.monotonic()
    deadline = start + timeout_s
    budgets = dict(match_budget_ms=match_budget_ms, goal_budget_ms=goal_budget_ms)
    root = ProblemState.from_problem(problem, system, **budgets)
    expanded = 0

    def done(status: SearchStatus, state: ProblemState | None = None) -> SearchResult:
        seqs = _prune_history(state) if state is not None and state.solved else []
        return SearchResult(
            status=status,
            theorem_seqs=seqs,
            wall_time=time.monotonic() - start,
            nodes_expanded=expanded,
            value=state.solved_value if state is not None else None,
        )

    if check_goal(root):
        return done(SearchStatus.SOLVED, root)

    try:
        if strategy == "rs":
            rng = random.Random(seed)
            state = root
            while time.monotonic() < deadline:
                names = sorted(applicable_theorems(state))
                if not names:
                    return done(SearchStatus.UNSOLVED)
                apply_theorem(system.theorem(rng.choice(names)), state)
                expanded += 1
                if check_goal(state):
                    return done(SearchStatus.SOLVED, state)
            return done(SearchStatus.TIMEOUT)

        if strategy in ("bfs", "dfs"):
            frontier = deque([(root, frozenset())])
            visited = {frozenset()}
            while frontier:
                if time.monotonic() > deadline:
                    return done(SearchStatus.TIMEOUT)
                state, key = frontier.popleft() if strategy == "bfs" else frontier.pop()
                for theorem in system.theorems:
                    child_key = key | {theorem.name}
                    if child_key in visited:
                        continue
                    child = state.clone()
                    if not apply_theorem(theorem, child):
                        continue
                    visited.add(child_key)
                    expanded += 1
                    if check_goal(child):
                        return done(SearchStatus.SOLVED, child)
                    frontier.append((child, child_key))
                    if time.monotonic() > deadline:
                        return done(SearchStatus.TIMEOUT)
            return done(SearchStatus.UNSOLVED)

        # bs / gb
        beams = [Beam(root, 1.0, [])]

        def expander(beam: Beam, ti: int):
            nonlocal expanded
            expanded += 1
            child = beam.state.clone()
            applied = apply_theorem(system.theorems[ti], child)
            return child, applied

        expander.theorem_names = [t.name for t in system.theorems]

        while True:
            if time.monotonic() > deadline:
                return done(SearchStatus.TIMEOUT)
            live = [b for b in beams if b.alive]
            if not live:
                return done(SearchStatus.UNSOLVED)
            scores = [
                normalize_scores(predictor.score_state(
                    b.state, b.history,
                    serialize_for_predictor(build_hypergraph(b.state)),
                ))
                for b in live
            ]
            step = beam_step if strategy == "bs" else greedy_beam_step
            beams = step(live, scores, k, expander)
            for beam in beams:
                if beam.alive and check_goal(beam.state):
                    return done(SearchStatus.SOLVED, beam.state)
    except ProtocolError:
        return done(SearchStatus.PREDICTOR_ERROR)

    return done(SearchStatus.UNSOLVED)
