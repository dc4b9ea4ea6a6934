"""Condition store: the monotone set of known facts as quintuples.

Each condition is (id, type, body, premises, theorem).  Bodies are kept in
canonical form (lexicographically smallest orbit member under the
predicate's declared symmetries) so duplicate derivations collapse onto
one hypernode; the first derivation wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .formal import (
    EQUAL,
    OPERATORS,
    TRIG_FUNCS,
    FormalSystem,
    TermTree,
    is_number_token,
    render_term,
    tokenize,
)

CTYPE_RELATION = "GeometricRelation"
CTYPE_EQUATION = "Equation"
CTYPE_SOLVED = "SolvedValue"

GIVEN = "given"
SOLVE_EQ = "solve_eq"


class StoreError(Exception):
    pass


@dataclass(frozen=True)
class HyperedgeLabel:
    """Identity of one theorem application: name, binding, instance.

    ``step`` records the apply cycle that created the edge so search
    histories can be pruned back to goal ancestors.  The reserved names
    ``given`` and ``solve_eq`` mark initial facts and algebra results.
    """

    theorem: str
    binding: tuple[tuple[str, str], ...] = ()
    step: int = 0

    def render(self) -> str:
        if not self.binding:
            return self.theorem
        pairs = ",".join(f"{v}={p}" for v, p in self.binding)
        return f"{self.theorem}({pairs})"


GIVEN_LABEL = HyperedgeLabel(GIVEN)


@dataclass(frozen=True)
class Condition:
    cid: int
    ctype: str
    body: TermTree
    premises: frozenset[int]
    theorem: HyperedgeLabel


def canonicalize(body: TermTree, system: FormalSystem) -> TermTree:
    """Smallest orbit member (by token list) under declared symmetries.

    Recurses into nested attribute terms; ``Equal`` is treated as
    symmetric in its two arguments; arithmetic operators keep their
    argument order.  Idempotent.
    """
    head = body.head
    if not body.args:
        return body
    args = tuple(canonicalize(a, system) for a in body.args)
    if head == EQUAL:
        flipped = (args[1], args[0])
        best = min((args, flipped), key=lambda pair: _pair_key(pair))
        return TermTree(EQUAL, best)
    if head in OPERATORS or head in TRIG_FUNCS:
        return TermTree(head, args)
    pred = system.predicate(head)
    letters = [leaf.head for leaf in args]
    offsets = pred.slot_offsets()
    best_letters = None
    for element in pred.symmetries:
        candidate: list[str] = []
        for src, reversed_ in element:
            chunk = letters[offsets[src]:offsets[src] + pred.slots[src].points]
            candidate.extend(reversed(chunk) if reversed_ else chunk)
        if best_letters is None or candidate < best_letters:
            best_letters = candidate
    return TermTree(head, tuple(TermTree(ch) for ch in best_letters))


def _pair_key(pair: tuple[TermTree, TermTree]) -> list[str]:
    key: list[str] = []
    for t in pair:
        key.extend(tokenize(t))
    return key


class ConditionStore:
    """Append-only store; ids are sequential and never reused."""

    def __init__(self, system: FormalSystem):
        self.system = system
        self.conditions: list[Condition] = []
        self._by_body: dict[TermTree, int] = {}
        self._by_head: dict[str, list[int]] = {}

    def __len__(self) -> int:
        return len(self.conditions)

    def add(
        self,
        body: TermTree,
        ctype: str,
        premises: frozenset[int] | set[int],
        theorem: HyperedgeLabel,
    ) -> tuple[bool, int]:
        """Insert a canonicalized condition; returns (added, id).

        If an equal canonical body is already stored the existing id is
        returned unchanged (first derivation wins).
        """
        premises = frozenset(premises)
        for pid in premises:
            if pid < 0 or pid >= len(self.conditions):
                raise StoreError(f"unknown premise id {pid}")
        canon = canonicalize(body, self.system)
        existing = self._by_body.get(canon)
        if existing is not None:
            return False, existing
        cid = len(self.conditions)
        cond = Condition(cid, ctype, canon, premises, theorem)
        self.conditions.append(cond)
        self._by_body[canon] = cid
        self._by_head.setdefault(canon.head, []).append(cid)
        return True, cid

    def get(self, cid: int) -> Condition:
        return self.conditions[cid]

    def contains(self, body: TermTree) -> bool:
        return canonicalize(body, self.system) in self._by_body

    def lookup(self, body: TermTree) -> int | None:
        return self._by_body.get(canonicalize(body, self.system))

    def query(self, head: str) -> list[Condition]:
        """All stored conditions with that head, in id order."""
        return [self.conditions[i] for i in self._by_head.get(head, [])]

    def clone(self) -> "ConditionStore":
        other = ConditionStore.__new__(ConditionStore)
        other.system = self.system
        other.conditions = list(self.conditions)
        other._by_body = dict(self._by_body)
        other._by_head = {k: list(v) for k, v in self._by_head.items()}
        return other

    def dump_ndjson(self) -> str:
        """One quintuple per line: {"id","type","body","premises","theorem"}."""
        lines = []
        for c in self.conditions:
            lines.append(json.dumps({
                "id": c.cid,
                "type": c.ctype,
                "body": render_term(c.body, self.system),
                "premises": sorted(c.premises),
                "theorem": c.theorem.render(),
            }, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")


def ctype_for_body(body: TermTree) -> str:
    return CTYPE_EQUATION if body.head == EQUAL else CTYPE_RELATION


def orbit_variants(body: TermTree, system: FormalSystem) -> list[TermTree]:
    """All symmetry-equivalent forms of a stored body, canonical first.

    Premise patterns are unified against every variant so that e.g.
    ``Parallel(CD,EF)`` can match a condition stored as ``Parallel(CD,FE)``.
    Only top-level predicate symmetries matter here; equation premises are
    checked numerically instead.
    """
    head = body.head
    if not body.args or head == EQUAL or head in OPERATORS or head in TRIG_FUNCS:
        return [body]
    if is_number_token(head):
        return [body]
    pred = system.predicate(head)
    letters = [leaf.head for leaf in body.args]
    offsets = pred.slot_offsets()
    seen = []
    out = []
    for element in pred.symmetries:
        candidate: list[str] = []
        for src, reversed_ in element:
            chunk = letters[offsets[src]:offsets[src] + pred.slots[src].points]
            candidate.extend(reversed(chunk) if reversed_ else chunk)
        if candidate not in seen:
            seen.append(candidate)
            out.append(TermTree(head, tuple(TermTree(ch) for ch in candidate)))
    return out
