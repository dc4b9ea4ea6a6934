"""Solution hypergraph: construction, predictor serialization, theorem DAG.

Conditions are hypernodes; theorem applications group into hyperedges.
Serialization compresses each node's conceptual adjacency row into
(values, pe, se) where pe counts 1..len within the compressed row and se
holds the original 1-based column indices.  The theorem DAG is what
remains when hypernodes are dropped; its random topological sorts drive
training-pair generation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .formal import FormalSystem, Goal, Problem, TermTree, tokenize
from .reasoner import (
    ProblemState,
    apply_binding,
    applicable_theorems,
    apply_theorem,
    check_goal,
)
from .store import GIVEN, SOLVE_EQ, Condition, HyperedgeLabel


class HypergraphError(Exception):
    pass


@dataclass(frozen=True)
class Hyperedge:
    label: HyperedgeLabel
    premises: tuple[int, ...]
    conclusions: tuple[int, ...]


@dataclass
class SolutionHypergraph:
    nodes: list[Condition]
    edges: list[Hyperedge]
    goal: Goal
    goal_condition_id: int | None = None


@dataclass
class EdgeRow:
    values: list[str]
    pe: list[int]
    se: list[int]


@dataclass
class SerializedGraph:
    node_tokens: list[list[str]]
    edge_rows: list[EdgeRow]
    goal_tokens: list[str]

    def to_payload(self) -> dict:
        return {
            "nodes": self.node_tokens,
            "edges": [{"values": r.values, "pe": r.pe, "se": r.se} for r in self.edge_rows],
            "goal": self.goal_tokens,
        }


@dataclass
class TheoremDAG:
    vertices: list[HyperedgeLabel]
    arcs: set[tuple[HyperedgeLabel, HyperedgeLabel]]
    bindings: dict[HyperedgeLabel, dict[str, str]] = field(default_factory=dict)


@dataclass
class StepSample:
    problem_id: str
    step: int
    graph: SerializedGraph
    truth: set[str]


def build_hypergraph(state: ProblemState) -> SolutionHypergraph:
    """Group stored quintuples by hyperedge label; givens stay isolated."""
    by_label: dict[HyperedgeLabel, list[Condition]] = {}
    for cond in state.store.conditions:
        if cond.theorem.theorem != GIVEN:
            by_label.setdefault(cond.theorem, []).append(cond)
    edges = []
    for label, conds in by_label.items():
        premises: set[int] = set()
        for c in conds:
            premises |= c.premises
        edges.append(Hyperedge(label, tuple(sorted(premises)), tuple(c.cid for c in conds)))
    edges.sort(key=lambda e: min(e.conclusions))
    return SolutionHypergraph(
        nodes=list(state.store.conditions),
        edges=edges,
        goal=state.goal,
        goal_condition_id=state.goal_condition_id,
    )


def serialize_for_predictor(
    hypergraph: SolutionHypergraph,
    goal: Goal | None = None,
    numerals: set[str] | None = None,
) -> SerializedGraph:
    """Sparse (values, pe, se) encoding of the adjacency rows.

    The conceptual cell (i, j) holds the theorem token of the hyperedge
    connecting nodes i and j; both directions are recorded so every row
    sees all incident edges.  Rows drop empty cells: pe restarts at 1,
    se keeps the 1-based column indices.
    """
    goal = goal or hypergraph.goal
    n = len(hypergraph.nodes)
    cells: dict[int, dict[int, str]] = {i: {} for i in range(n)}
    for edge in hypergraph.edges:
        token = edge.label.theorem
        for p in edge.premises:
            for c in edge.conclusions:
                cells[p][c] = token
                cells[c][p] = token
    rows = []
    for i in range(n):
        cols = sorted(cells[i])
        rows.append(EdgeRow(
            values=[cells[i][j] for j in cols],
            pe=list(range(1, len(cols) + 1)),
            se=[j + 1 for j in cols],
        ))
    goal_tree = TermTree(goal.kind, (goal.target,))
    return SerializedGraph(
        node_tokens=[tokenize(c.body, numerals) for c in hypergraph.nodes],
        edge_rows=rows,
        goal_tokens=tokenize(goal_tree, numerals),
    )


def extract_theorem_dag(hypergraph: SolutionHypergraph, goal: Goal | None = None) -> TheoremDAG:
    """Ancestor closure of the goal-producing edge, hypernodes removed.

    The ``solve_eq`` pseudo-edge of a Value goal is traversed but not
    itself a vertex; only genuine theorem applications remain.
    """
    if hypergraph.goal_condition_id is None:
        raise HypergraphError("goal not reached; no goal condition recorded")
    producer: dict[int, Hyperedge] = {}
    for edge in hypergraph.edges:
        for cid in edge.conclusions:
            producer[cid] = edge
    goal_edge = producer.get(hypergraph.goal_condition_id)
    if goal_edge is None:
        return TheoremDAG([], set())  # the goal was a given condition
    vertices: list[HyperedgeLabel] = []
    seen: set[HyperedgeLabel] = set()
    arcs: set[tuple[HyperedgeLabel, HyperedgeLabel]] = set()
    queue = [goal_edge]
    seen.add(goal_edge.label)
    while queue:
        edge = queue.pop()
        if edge.label.theorem != SOLVE_EQ:
            vertices.append(edge.label)
        for pid in edge.premises:
            parent = producer.get(pid)
            if parent is None:
                continue
            if edge.label.theorem != SOLVE_EQ and parent.label.theorem != SOLVE_EQ:
                arcs.add((parent.label, edge.label))
            if parent.label not in seen:
                seen.add(parent.label)
                queue.append(parent)
    vertices.sort(key=lambda lbl: lbl.step)
    return TheoremDAG(vertices, arcs, {v: dict(v.binding) for v in vertices})


def random_topological_sort(dag: TheoremDAG, seed: int) -> list[HyperedgeLabel]:
    """A random linear extension, uniform among ready vertices per step."""
    rng = random.Random(seed)
    indegree = {v: 0 for v in dag.vertices}
    out: dict[HyperedgeLabel, list[HyperedgeLabel]] = {v: [] for v in dag.vertices}
    for u, v in dag.arcs:
        indegree[v] += 1
        out[u].append(v)
    ready = sorted((v for v in dag.vertices if indegree[v] == 0), key=lambda l: l.step)
    order = []
    while ready:
        idx = rng.randrange(len(ready))
        vertex = ready.pop(idx)
        order.append(vertex)
        for succ in sorted(out[vertex], key=lambda l: l.step):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                ready.append(succ)
    if len(order) != len(dag.vertices):
        raise HypergraphError("cycle detected in theorem DAG")
    return order


def replay_annotation(problem: Problem, system: FormalSystem, **budgets) -> ProblemState:
    """Apply the annotated sequence by name; error if it fails to solve."""
    state = ProblemState.from_problem(problem, system, **budgets)
    for name, _binding in problem.theorem_seq:
        apply_theorem(system.theorem(name), state)
    if not check_goal(state):
        raise HypergraphError(
            f"annotated sequence does not solve problem {problem.problem_id}"
        )
    return state


def replay_labels(
    problem: Problem,
    system: FormalSystem,
    labels: list[HyperedgeLabel],
    **budgets,
) -> ProblemState:
    """Replay specific theorem applications (one binding each) from h0."""
    state = ProblemState.from_problem(problem, system, **budgets)
    for label in labels:
        apply_binding(system.theorem(label.theorem), dict(label.binding), state)
    check_goal(state)
    return state


def generate_step_samples(problem: Problem, system: FormalSystem, seed: int) -> list[StepSample]:
    """Training pairs (state before step i, applicable theorems there).

    Replays the annotation, prunes the theorem DAG to goal ancestors,
    draws one seeded topological order, and replays it from h0 emitting
    one sample per DAG vertex.
    """
    solved_state = replay_annotation(problem, system)
    dag = extract_theorem_dag(build_hypergraph(solved_state))
    order = random_topological_sort(dag, seed)
    state = ProblemState.from_problem(problem, system)
    samples = []
    for i, label in enumerate(order):
        truth = applicable_theorems(state)
        if not truth:
            raise HypergraphError(
                f"no applicable theorem at step {i} of problem {problem.problem_id}"
            )
        graph = serialize_for_predictor(build_hypergraph(state), problem.goal)
        samples.append(StepSample(problem.problem_id, i, graph, truth))
        apply_binding(system.theorem(label.theorem), dict(label.binding), state)
    return samples


def sample_to_json(sample: StepSample) -> str:
    payload = sample.graph.to_payload()
    return json.dumps({
        "problem_id": sample.problem_id,
        "step": sample.step,
        "nodes": payload["nodes"],
        "edges": payload["edges"],
        "goal": payload["goal"],
        "truth": sorted(sample.truth),
    }, separators=(",", ":"))


def difficulty_level(l: int) -> str:
    """Difficulty bands by annotated sequence length."""
    if l < 1:
        raise ValueError(f"annotated length must be >= 1, got {l}")
    if l <= 2:
        return "L1"
    if l <= 4:
        return "L2"
    if l <= 6:
        return "L3"
    if l <= 8:
        return "L4"
    if l <= 10:
        return "L5"
    return "L6"
