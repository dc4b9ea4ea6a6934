"""The formal environment: premise matching, theorem application, goal checks.

Matching is backtracking unification of geometric premise patterns against
the canonical store (candidates indexed by predicate head, every symmetry
variant tried); numeric premises (Equal over attributes) are checked by
the bounded equation solver.  Applying a theorem saturates it: every
match found gets its own hyperedge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import AlgebraSystem, SolveStatus, Value
from .formal import (
    EQUAL,
    FormalSystem,
    Goal,
    Problem,
    TermTree,
    TheoremDef,
    is_number_token,
    is_point_token,
)
from .store import (
    CTYPE_SOLVED,
    GIVEN_LABEL,
    ConditionStore,
    HyperedgeLabel,
    SOLVE_EQ,
    canonicalize,
    ctype_for_body,
    orbit_variants,
)

DEFAULT_MATCH_BUDGET_MS = 20.0
DEFAULT_GOAL_BUDGET_MS = 100.0


@dataclass
class Match:
    binding: dict[str, str]
    premise_ids: frozenset[int]
    new_conclusions: list[TermTree]


@dataclass
class ProblemState:
    """One search state h_i: store + algebra + goal, clonable for beams."""

    system: FormalSystem
    store: ConditionStore
    algebra: AlgebraSystem
    goal: Goal
    solved: bool = False
    solved_value: Value | None = None
    goal_condition_id: int | None = None
    applied: list[HyperedgeLabel] = field(default_factory=list)
    step: int = 0
    match_budget_ms: float = DEFAULT_MATCH_BUDGET_MS
    goal_budget_ms: float = DEFAULT_GOAL_BUDGET_MS

    @classmethod
    def from_problem(
        cls,
        problem: Problem,
        system: FormalSystem,
        match_budget_ms: float = DEFAULT_MATCH_BUDGET_MS,
        goal_budget_ms: float = DEFAULT_GOAL_BUDGET_MS,
    ) -> "ProblemState":
        store = ConditionStore(system)
        algebra = AlgebraSystem(system)
        state = cls(
            system=system,
            store=store,
            algebra=algebra,
            goal=problem.goal,
            match_budget_ms=match_budget_ms,
            goal_budget_ms=goal_budget_ms,
        )
        for body in problem.conditions:
            added, cid = store.add(body, ctype_for_body(body), frozenset(), GIVEN_LABEL)
            if added and body.head == EQUAL:
                algebra.add_equation(store.get(cid).body, cid)
        return state

    def clone(self) -> "ProblemState":
        return ProblemState(
            system=self.system,
            store=self.store.clone(),
            algebra=self.algebra.clone(),
            goal=self.goal,
            solved=self.solved,
            solved_value=self.solved_value,
            goal_condition_id=self.goal_condition_id,
            applied=list(self.applied),
            step=self.step,
            match_budget_ms=self.match_budget_ms,
            goal_budget_ms=self.goal_budget_ms,
        )


def _unify(pattern: TermTree, concrete: TermTree, binding: dict[str, str], strict: bool) -> dict[str, str] | None:
    """Extend binding so pattern instantiates to concrete, or None."""
    if pattern.head != concrete.head and not is_point_token(pattern.head):
        return None
    if is_point_token(pattern.head) and not pattern.args:
        point = concrete.head
        bound = binding.get(pattern.head)
        if bound is not None:
            return binding if bound == point else None
        if strict and point in binding.values():
            return None
        binding = dict(binding)
        binding[pattern.head] = point
        return binding
    if len(pattern.args) != len(concrete.args):
        return None
    for p_arg, c_arg in zip(pattern.args, concrete.args):
        binding = _unify(p_arg, c_arg, binding, strict)
        if binding is None:
            return None
    return binding


def instantiate(pattern: TermTree, binding: dict[str, str]) -> TermTree:
    if not pattern.args:
        if is_point_token(pattern.head) and pattern.head in binding:
            return TermTree(binding[pattern.head])
        return pattern
    return TermTree(pattern.head, tuple(instantiate(a, binding) for a in pattern.args))


def match_theorem(theorem: TheoremDef, state: ProblemState) -> list[Match]:
    """All bindings satisfying the premises that yield a novel conclusion.

    Geometric premises are matched left-to-right with backtracking;
    numeric premises are then checked by solve_value under the per-call
    match budget.  Results are ordered lexicographically by binding.
    """
    geo = [p for p in theorem.premises if p.head != EQUAL]
    numeric = [p for p in theorem.premises if p.head == EQUAL]
    store = state.store
    found: dict[tuple, Match] = {}

    def backtrack(i: int, binding: dict[str, str], premise_ids: frozenset[int]) -> None:
        if i == len(geo):
            _finish(binding, premise_ids)
            return
        pattern = geo[i]
        for cond in store.query(pattern.head):
            for variant in orbit_variants(cond.body, state.system):
                extended = _unify(pattern, variant, binding, theorem.strict)
                if extended is not None:
                    backtrack(i + 1, extended, premise_ids | {cond.cid})

    def _finish(binding: dict[str, str], premise_ids: frozenset[int]) -> None:
        key = tuple(sorted(binding.items()))
        if key in found:
            return
        ids = premise_ids
        for pattern in numeric:
            eq = instantiate(pattern, binding)
            stored = store.lookup(eq)
            if stored is not None:
                ids = ids | {stored}
                continue
            result = state.algebra.equation_holds(eq, state.match_budget_ms)
            if result.status is not SolveStatus.SOLVED:
                return
            ids = ids | result.used
        novel = []
        seen = set()
        for pattern in theorem.conclusions:
            body = canonicalize(instantiate(pattern, binding), state.system)
            if body not in seen and not store.contains(body):
                seen.add(body)
                novel.append(body)
        if novel:
            found[key] = Match(dict(binding), ids, novel)

    backtrack(0, {}, frozenset())
    return [found[k] for k in sorted(found)]


def apply_theorem(theorem: TheoremDef, state: ProblemState) -> bool:
    """Apply every match at once; True iff at least one condition was added."""
    matches = match_theorem(theorem, state)
    state.step += 1
    added_any = False
    for match in matches:
        label = HyperedgeLabel(
            theorem.name,
            tuple((v, match.binding[v]) for v in theorem.variables if v in match.binding),
            step=state.step,
        )
        edge_added = False
        for body in match.new_conclusions:
            added, cid = state.store.add(body, ctype_for_body(body), match.premise_ids, label)
            if added:
                edge_added = True
                added_any = True
                if body.head == EQUAL:
                    state.algebra.add_equation(state.store.get(cid).body, cid)
        if edge_added:
            state.applied.append(label)
    return added_any


def apply_binding(theorem: TheoremDef, binding: dict[str, str], state: ProblemState) -> bool:
    """Apply one specific binding of a theorem (used by replay)."""
    for match in match_theorem(theorem, state):
        if match.binding == binding:
            state.step += 1
            label = HyperedgeLabel(
                theorem.name,
                tuple((v, binding[v]) for v in theorem.variables if v in binding),
                step=state.step,
            )
            added = False
            for body in match.new_conclusions:
                ok, cid = state.store.add(body, ctype_for_body(body), match.premise_ids, label)
                if ok:
                    added = True
                    if body.head == EQUAL:
                        state.algebra.add_equation(state.store.get(cid).body, cid)
            if added:
                state.applied.append(label)
            return added
    return False


def applicable_theorems(state: ProblemState) -> set[str]:
    """Names of theorems with at least one novel match in this state."""
    return {t.name for t in state.system.theorems if match_theorem(t, state)}


def _value_literal(value: Value) -> TermTree:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return TermTree(str(value.numerator))
        return TermTree("/", (TermTree(str(value.numerator)), TermTree(str(value.denominator))))
    return TermTree(repr(float(value)))


def check_goal(state: ProblemState) -> bool:
    """Relation: canonical target stored.  Value: target solvable.

    On a Value success a SolvedValue condition is added whose premises
    are the provenance set of the solve.
    """
    if state.solved:
        return True
    goal = state.goal
    if goal.kind == "Relation":
        cid = state.store.lookup(goal.target)
        if cid is None:
            return False
        state.solved = True
        state.goal_condition_id = cid
        return True
    result = state.algebra.solve_value(goal.target, state.goal_budget_ms)
    if result.status is not SolveStatus.SOLVED:
        return False
    state.step += 1
    body = TermTree(EQUAL, (goal.target, _value_literal(result.value)))
    _, cid = state.store.add(
        body, CTYPE_SOLVED, result.used, HyperedgeLabel(SOLVE_EQ, step=state.step)
    )
    state.solved = True
    state.solved_value = result.value
    state.goal_condition_id = cid
    return True
