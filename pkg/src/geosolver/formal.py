"""Formal language layer: term trees, the tokenizer, and document parsing.

A condition body is a term tree such as ``Parallel(AB,CD)`` or
``Equal(LengthOfLine(AB),10)``.  Point arguments are single uppercase
letters; a multi-letter group like ``AB`` denotes an ordered point
sequence and is stored flattened, one leaf per letter.  Arithmetic inside
``Equal`` uses the infix operators ``+ - * / ^`` with the usual
precedence, plus the bounded trig functions ``Sin``/``Cos``/``Tan``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

EQUAL = "Equal"
OPERATORS = ("+", "-", "*", "/", "^")
TRIG_FUNCS = ("Sin", "Cos", "Tan")

_NUMBER_RE = re.compile(r"^-?[0-9]+(\.[0-9]+)?$")
_POINT_RE = re.compile(r"^[A-Z]$")


class FormalError(Exception):
    """Base error for the formal-language layer."""


class TermParseError(FormalError):
    """Raised on malformed term strings or documents; carries a position."""

    def __init__(self, message: str, pos: int | None = None):
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)
        self.pos = pos


class ArityError(FormalError):
    """Raised when a token stream or term does not fit any declared arity."""


@dataclass(frozen=True)
class TermTree:
    """A condition body: head token plus ordered argument subtrees."""

    head: str
    args: tuple["TermTree", ...] = ()

    def __repr__(self) -> str:
        if not self.args:
            return f"TermTree({self.head!r})"
        return f"TermTree({self.head!r}, {list(self.args)!r})"


def is_number_token(text: str) -> bool:
    return bool(_NUMBER_RE.match(text))


def is_point_token(text: str) -> bool:
    return bool(_POINT_RE.match(text))


def number_value(text: str) -> Fraction:
    """Exact rational value of a numeric literal token."""
    if "." in text:
        whole, frac = text.lstrip("-").split(".", 1)
        value = Fraction(int(whole or "0") * 10 ** len(frac) + int(frac), 10 ** len(frac))
        return -value if text.startswith("-") else value
    return Fraction(int(text))


def point_leaf(letter: str) -> TermTree:
    return TermTree(letter)


def number_leaf(text: str) -> TermTree:
    return TermTree(text)


@dataclass(frozen=True)
class SlotDef:
    """One argument slot of a predicate: entity kind plus point count."""

    kind: str
    points: int


@dataclass(frozen=True)
class PredicateDef:
    """A declared predicate or attribute.

    ``symmetries`` lists the argument permutations declared equivalent:
    each element gives, per target slot position, the source slot index
    and whether that slot's points are reversed.  The identity is always
    present.
    """

    name: str
    slots: tuple[SlotDef, ...]
    symmetries: tuple[tuple[tuple[int, bool], ...], ...]
    is_attribute: bool = False

    @property
    def total_points(self) -> int:
        return sum(s.points for s in self.slots)

    def slot_offsets(self) -> list[int]:
        offsets, acc = [], 0
        for s in self.slots:
            offsets.append(acc)
            acc += s.points
        return offsets


@dataclass(frozen=True)
class TheoremDef:
    """A named rule: premise patterns imply conclusion patterns.

    Patterns are term trees whose point leaves are the theorem's
    variables.  ``strict`` means distinct variables must bind distinct
    points.
    """

    name: str
    variables: tuple[str, ...]
    premises: tuple[TermTree, ...]
    conclusions: tuple[TermTree, ...]
    strict: bool = True


@dataclass(frozen=True)
class Goal:
    kind: str  # "Value" | "Relation"
    target: TermTree


@dataclass(frozen=True)
class Problem:
    problem_id: str
    conditions: tuple[TermTree, ...]
    goal: Goal
    theorem_seq: tuple[tuple[str, dict], ...] = ()
    level: int | None = None
    answer: str | None = None

    @property
    def annotated_length(self) -> int:
        return len(self.theorem_seq)


@dataclass
class FormalSystem:
    """The parsed knowledge base: declared predicates plus the theorem list.

    The theorem list order is stable and defines the vocabulary index
    space of size M used by predictors.
    """

    predicates: dict[str, PredicateDef]
    theorems: list[TheoremDef] = field(default_factory=list)

    def __post_init__(self):
        self.theorem_index = {t.name: i for i, t in enumerate(self.theorems)}

    @property
    def num_theorems(self) -> int:
        return len(self.theorems)

    def predicate(self, name: str) -> PredicateDef:
        try:
            return self.predicates[name]
        except KeyError:
            raise FormalError(f"undeclared predicate: {name}") from None

    def theorem(self, name: str) -> TheoremDef:
        try:
            return self.theorems[self.theorem_index[name]]
        except KeyError:
            raise FormalError(f"unknown theorem: {name}") from None


# ---------------------------------------------------------------------------
# Term-string parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|[0-9]+(?:\.[0-9]+)?|[()+\-*/^,=])")


class _TermParser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise TermParseError(f"unexpected character {text[pos]!r}", pos)
                break
            self.tokens.append((m.group(1), m.start(1)))
            pos = m.end()
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def next(self, expected: str | None = None) -> str:
        if self.i >= len(self.tokens):
            raise TermParseError("unexpected end of input", len(self.text))
        tok, pos = self.tokens[self.i]
        if expected is not None and tok != expected:
            raise TermParseError(f"expected {expected!r} but found {tok!r}", pos)
        self.i += 1
        return tok

    def done(self) -> bool:
        return self.i >= len(self.tokens)

    # Grammar: a condition is a call; Equal and trig heads take expression
    # arguments, every other head takes point groups.
    def parse_condition(self) -> TermTree:
        tree = self.parse_call()
        if not self.done():
            tok, pos = self.tokens[self.i]
            raise TermParseError(f"trailing input {tok!r}", pos)
        return tree

    def parse_call(self) -> TermTree:
        name = self.next()
        if not name[0].isalpha():
            raise TermParseError(f"expected a name, found {name!r}")
        self.next("(")
        if name == EQUAL:
            lhs = self.parse_expr()
            self.next(",")
            rhs = self.parse_expr()
            self.next(")")
            return TermTree(EQUAL, (lhs, rhs))
        if name in TRIG_FUNCS:
            arg = self.parse_expr()
            self.next(")")
            return TermTree(name, (arg,))
        points: list[TermTree] = []
        while True:
            group = self.next()
            if not group.isalpha() or not group.isupper():
                raise TermParseError(f"expected point letters, found {group!r}")
            points.extend(point_leaf(ch) for ch in group)
            if self.peek() == ",":
                self.next(",")
                continue
            break
        self.next(")")
        return TermTree(name, tuple(points))

    def parse_expr(self) -> TermTree:
        node = self.parse_mul()
        while self.peek() in ("+", "-"):
            op = self.next()
            node = TermTree(op, (node, self.parse_mul()))
        return node

    def parse_mul(self) -> TermTree:
        node = self.parse_pow()
        while self.peek() in ("*", "/"):
            op = self.next()
            node = TermTree(op, (node, self.parse_pow()))
        return node

    def parse_pow(self) -> TermTree:
        base = self.parse_atom()
        if self.peek() == "^":
            self.next("^")
            return TermTree("^", (base, self.parse_pow()))
        return base

    def parse_atom(self) -> TermTree:
        tok = self.peek()
        if tok is None:
            raise TermParseError("unexpected end of expression", len(self.text))
        if tok == "(":
            self.next("(")
            node = self.parse_expr()
            self.next(")")
            return node
        if tok == "-":
            self.next("-")
            inner = self.next()
            if not is_number_token(inner):
                raise TermParseError("unary minus is only supported on numeric literals")
            return number_leaf("-" + inner)
        if is_number_token(tok):
            return number_leaf(self.next())
        # a function call (attribute or trig) inside an expression
        return self.parse_call()


def parse_term(text: str) -> TermTree:
    """Parse a surface term string like ``Parallel(AB,CD)`` into a TermTree."""
    return _TermParser(text).parse_condition()


def parse_expression(text: str) -> TermTree:
    """Parse an arithmetic expression such as ``LengthOfLine(AB)+3``."""
    parser = _TermParser(text)
    tree = parser.parse_expr()
    if not parser.done():
        tok, pos = parser.tokens[parser.i]
        raise TermParseError(f"trailing input {tok!r}", pos)
    return tree


# ---------------------------------------------------------------------------
# Validation against a system
# ---------------------------------------------------------------------------

def validate_term(
    tree: TermTree,
    system: FormalSystem,
    variables: set[str] | None = None,
    expr: bool = False,
) -> None:
    """Check declared heads, arities, and (for patterns) variable usage.

    ``variables`` is the allowed point-leaf alphabet for theorem patterns;
    for ground terms it is None and any uppercase letter is a point.
    Inside expressions (``expr``) only attributes may appear; relation
    predicates are only valid at condition level.
    """
    head = tree.head
    if is_number_token(head):
        if tree.args:
            raise FormalError("numeric literal cannot have arguments")
        return
    if head == EQUAL:
        if expr:
            raise FormalError("Equal cannot be nested inside an expression")
        if len(tree.args) != 2:
            raise ArityError("Equal takes exactly two arguments")
        for a in tree.args:
            validate_term(a, system, variables, expr=True)
        return
    if head in OPERATORS:
        if len(tree.args) != 2:
            raise ArityError(f"operator {head!r} takes exactly two arguments")
        for a in tree.args:
            validate_term(a, system, variables, expr=True)
        return
    if head in TRIG_FUNCS:
        if len(tree.args) != 1:
            raise ArityError(f"{head} takes exactly one argument")
        validate_term(tree.args[0], system, variables, expr=True)
        return
    pred = system.predicate(head)
    if expr and not pred.is_attribute:
        raise FormalError(f"{head} is a relation and cannot appear in an expression")
    if len(tree.args) != pred.total_points:
        raise ArityError(
            f"{head} expects {pred.total_points} points, got {len(tree.args)}"
        )
    for leaf in tree.args:
        if leaf.args or not is_point_token(leaf.head):
            raise FormalError(f"{head} arguments must be single point letters")
        if variables is not None and leaf.head not in variables:
            raise FormalError(f"unbound variable {leaf.head} in {head} pattern")


def term_points(tree: TermTree) -> set[str]:
    """All point letters occurring in a term."""
    if not tree.args:
        return {tree.head} if is_point_token(tree.head) else set()
    pts: set[str] = set()
    for a in tree.args:
        pts |= term_points(a)
    return pts


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

def tokenize(body: TermTree, numerals: set[str] | None = None) -> list[str]:
    """Flatten a term pre-order: head first, then each argument in turn.

    Point groups expand to one token per letter; parentheses and commas
    emit nothing.  Numeric literals are single tokens unless ``numerals``
    is given and the literal is outside that closed set, in which case it
    is split into a leading sign token followed by digit/dot tokens so
    the predictor vocabulary stays bounded.
    """
    out: list[str] = []
    _tokenize_into(body, numerals, out)
    return out


def _tokenize_into(tree: TermTree, numerals: set[str] | None, out: list[str]) -> None:
    head = tree.head
    if is_number_token(head) and not tree.args:
        if numerals is not None and head not in numerals:
            if head.startswith("-"):
                out.append("-")
                head = head[1:]
            else:
                out.append("+")
            out.extend(head)
        else:
            out.append(head)
        return
    out.append(head)
    for a in tree.args:
        _tokenize_into(a, numerals, out)


def detokenize(tokens: list[str], system: FormalSystem) -> TermTree:
    """Rebuild a term tree from a pre-order token list using declared arities.

    Inverse of :func:`tokenize` in its default (unsplit-literal) mode.
    """
    if not tokens:
        raise ArityError("empty stream")
    pos = 0

    def read() -> TermTree:
        nonlocal pos
        if pos >= len(tokens):
            raise ArityError("token stream ended inside a term")
        head = tokens[pos]
        pos += 1
        if is_number_token(head):
            return number_leaf(head)
        if head == EQUAL or head in OPERATORS:
            return TermTree(head, (read(), read()))
        if head in TRIG_FUNCS:
            return TermTree(head, (read(),))
        pred = system.predicate(head)
        leaves = []
        for _ in range(pred.total_points):
            if pos >= len(tokens):
                raise ArityError(f"arity mismatch: {head} expects {pred.total_points} points")
            leaf = tokens[pos]
            pos += 1
            if not is_point_token(leaf):
                raise ArityError(f"arity mismatch: expected a point letter, found {leaf!r}")
            leaves.append(point_leaf(leaf))
        return TermTree(head, tuple(leaves))

    tree = read()
    if pos != len(tokens):
        raise ArityError(f"trailing tokens after a complete term: {tokens[pos:]}")
    return tree


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def render_term(tree: TermTree, system: FormalSystem) -> str:
    """Surface rendering: point groups per declared slots, infix arithmetic."""
    head = tree.head
    if is_number_token(head) and not tree.args:
        return head
    if head == EQUAL:
        return f"Equal({_render_expr(tree.args[0], system, 0)},{_render_expr(tree.args[1], system, 0)})"
    if head in TRIG_FUNCS:
        return f"{head}({_render_expr(tree.args[0], system, 0)})"
    if head in OPERATORS:
        return _render_expr(tree, system, 0)
    pred = system.predicate(head)
    letters = [leaf.head for leaf in tree.args]
    groups, offsets = [], pred.slot_offsets()
    for slot, off in zip(pred.slots, offsets):
        groups.append("".join(letters[off:off + slot.points]))
    return f"{head}({','.join(groups)})"


def _render_expr(tree: TermTree, system: FormalSystem, parent_prec: int) -> str:
    head = tree.head
    if head in OPERATORS:
        prec = _PRECEDENCE[head]
        lhs = _render_expr(tree.args[0], system, prec)
        # right side needs a paren at equal precedence for - / ^ chains
        rhs = _render_expr(tree.args[1], system, prec + (0 if head in ("+", "*") else 1))
        text = f"{lhs}{head}{rhs}"
        return f"({text})" if prec < parent_prec else text
    return render_term(tree, system)


# ---------------------------------------------------------------------------
# Document parsing
# ---------------------------------------------------------------------------

def _parse_predicate(entry: dict) -> PredicateDef:
    name = entry["name"]
    slots = tuple(SlotDef(str(s["kind"]), int(s["points"])) for s in entry["slots"])
    raw = entry.get("symmetries", [])
    symmetries = []
    for sym in raw:
        if len(sym) != len(slots):
            raise FormalError(f"{name}: symmetry must cover all {len(slots)} slots")
        element = tuple((int(src), bool(rev)) for src, rev in sym)
        if sorted(src for src, _ in element) != list(range(len(slots))):
            raise FormalError(f"{name}: symmetry is not a slot permutation")
        for pos, (src, _) in enumerate(element):
            if slots[src].points != slots[pos].points:
                raise FormalError(f"{name}: symmetry maps slots of different sizes")
        symmetries.append(element)
    identity = tuple((i, False) for i in range(len(slots)))
    if identity not in symmetries:
        symmetries.insert(0, identity)
    return PredicateDef(
        name=name,
        slots=slots,
        symmetries=tuple(symmetries),
        is_attribute=entry.get("kind", "relation") == "attribute",
    )


def _parse_theorem(entry: dict, system: FormalSystem) -> TheoremDef:
    name = entry["name"]
    variables = tuple(entry["vars"])
    for v in variables:
        if not is_point_token(v):
            raise FormalError(f"{name}: variable {v!r} must be a single uppercase letter")
    if len(set(variables)) != len(variables):
        raise FormalError(f"{name}: duplicate variable")
    varset = set(variables)
    premises = tuple(parse_term(s) for s in entry["premises"])
    conclusions = tuple(parse_term(s) for s in entry["conclusions"])
    bound: set[str] = set()
    for p in premises:
        validate_term(p, system, varset)
        _require_condition_head(p, system, context=name)
        if p.head != EQUAL:
            bound |= term_points(p)
    for p in premises:
        if p.head == EQUAL and not term_points(p) <= bound:
            missing = sorted(term_points(p) - bound)
            raise FormalError(f"{name}: numeric premise uses unbound variable {missing[0]}")
    for c in conclusions:
        validate_term(c, system, varset)
        _require_condition_head(c, system, context=name)
        if not term_points(c) <= bound:
            missing = sorted(term_points(c) - bound)
            raise FormalError(f"{name}: unbound variable {missing[0]} in conclusion")
    return TheoremDef(
        name=name,
        variables=variables,
        premises=premises,
        conclusions=conclusions,
        strict=not entry.get("non_strict", False),
    )


def _require_condition_head(tree: TermTree, system: FormalSystem, context: str = "") -> None:
    """Conditions are relation atoms or Equal; bare attributes are not facts."""
    if tree.head == EQUAL:
        return
    if tree.head in system.predicates and not system.predicates[tree.head].is_attribute:
        return
    prefix = f"{context}: " if context else ""
    raise FormalError(f"{prefix}{tree.head} cannot stand alone as a condition")


def parse_system(text: str) -> FormalSystem:
    """Parse a formal-system document into the knowledge base."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TermParseError(f"system document: {e.msg}", e.pos) from None
    system = FormalSystem(predicates={})
    for entry in doc.get("predicates", []):
        pred = _parse_predicate(entry)
        if pred.name in system.predicates:
            raise FormalError(f"duplicate predicate {pred.name}")
        system.predicates[pred.name] = pred
    theorems = []
    seen = set()
    for entry in doc.get("theorems", []):
        t = _parse_theorem(entry, system)
        if t.name in seen:
            raise FormalError(f"duplicate theorem {t.name}")
        seen.add(t.name)
        theorems.append(t)
    system.theorems = theorems
    system.theorem_index = {t.name: i for i, t in enumerate(theorems)}
    return system


def parse_problem(text: str, system: FormalSystem) -> Problem:
    """Parse a problem document against an already-parsed system."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TermParseError(f"problem document: {e.msg}", e.pos) from None
    conditions = tuple(parse_term(s) for s in doc["conditions"])
    for c in conditions:
        validate_term(c, system)
        _require_condition_head(c, system)
    goal_doc = doc["goal"]
    kind = goal_doc["kind"]
    if kind not in ("Value", "Relation"):
        raise FormalError(f"goal kind must be Value or Relation, got {kind!r}")
    target = (parse_expression if kind == "Value" else parse_term)(goal_doc["target"])
    validate_term(target, system, expr=kind == "Value")
    if kind == "Relation" and (target.head == EQUAL or target.head in OPERATORS):
        raise FormalError("Relation goals must target a predicate term")
    seq = []
    for step in doc.get("theorem_seq", []):
        name = step["name"]
        system.theorem(name)  # raises for unknown theorems
        seq.append((name, dict(step.get("binding", {}))))
    return Problem(
        problem_id=str(doc["id"]),
        conditions=conditions,
        goal=Goal(kind, target),
        theorem_seq=tuple(seq),
        level=doc.get("level"),
        answer=str(doc["answer"]) if "answer" in doc else None,
    )
