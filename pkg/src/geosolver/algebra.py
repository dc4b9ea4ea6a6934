"""Equation accumulation and bounded exact solving.

Attribute terms map to symbols; ``Equal`` conditions become normalized
linear forms over *monomials* (products of symbol and trig atoms), so a
quadratic relation like ``c^2 = a^2 + b^2`` is linear over the atoms
``c^2``, ``a^2``, ``b^2``.  Solving loops three passes to a fixpoint or a
millisecond budget: substitution of known values, exact Gaussian
elimination over rationals, and single-unknown nonlinear isolation
(non-negative even roots, trig at exact-table angles).  Every pinned
value carries the set of source condition ids that produced it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .formal import (
    EQUAL,
    OPERATORS,
    TRIG_FUNCS,
    FormalSystem,
    TermTree,
    is_number_token,
    number_value,
    render_term,
)
from .store import canonicalize

Value = Fraction | float

_ZERO = Fraction(0)
_FLOAT_EPS = 1e-12


class AlgebraError(Exception):
    pass


class SolveStatus(Enum):
    SOLVED = "Solved"
    UNKNOWN = "Unknown"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class Sym:
    """One registered attribute quantity, e.g. LengthOfLine(AB)."""

    term: TermTree
    index: int
    name: str


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    value: Value | None = None
    used: frozenset[int] = frozenset()


@dataclass(frozen=True)
class _Equation:
    terms: tuple[tuple[tuple, Value], ...]  # sorted ((mono, coeff), ...)
    sources: frozenset[int]


# sin/cos/tan at the bounded exact-angle table, in degrees; None = undefined
_SQ2 = math.sqrt(2) / 2
_SQ3 = math.sqrt(3)
_TRIG_TABLE: dict[int, dict[str, Value | None]] = {
    0: {"Sin": Fraction(0), "Cos": Fraction(1), "Tan": Fraction(0)},
    30: {"Sin": Fraction(1, 2), "Cos": _SQ3 / 2, "Tan": 1 / _SQ3},
    45: {"Sin": _SQ2, "Cos": _SQ2, "Tan": Fraction(1)},
    60: {"Sin": _SQ3 / 2, "Cos": Fraction(1, 2), "Tan": _SQ3},
    90: {"Sin": Fraction(1), "Cos": Fraction(0), "Tan": None},
    120: {"Sin": _SQ3 / 2, "Cos": Fraction(-1, 2), "Tan": -_SQ3},
    135: {"Sin": _SQ2, "Cos": -_SQ2, "Tan": Fraction(-1)},
    150: {"Sin": Fraction(1, 2), "Cos": -_SQ3 / 2, "Tan": -1 / _SQ3},
    180: {"Sin": Fraction(0), "Cos": Fraction(-1), "Tan": Fraction(0)},
}


def _is_zero(x: Value) -> bool:
    if isinstance(x, Fraction):
        return x == 0
    return abs(x) < _FLOAT_EPS


def _values_equal(a: Value, b: Value) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) < 1e-9


def _mono_key(mono: tuple) -> tuple:
    return (len(mono), mono)


def _add_term(acc: dict, mono: tuple, coeff: Value) -> None:
    cur = acc.get(mono, _ZERO) + coeff
    if _is_zero(cur):
        acc.pop(mono, None)
    else:
        acc[mono] = cur


def _trig_eval(func: str, angle: Value) -> Value | None:
    for deg, row in _TRIG_TABLE.items():
        if _values_equal(angle, Fraction(deg)):
            return row[func]
    rad = math.radians(float(angle))
    return {"Sin": math.sin, "Cos": math.cos, "Tan": math.tan}[func](rad)


def _trig_invert(func: str, value: Value) -> Fraction | None:
    """Unique table angle with func(angle) == value, if any."""
    hits = [
        deg
        for deg, row in _TRIG_TABLE.items()
        if row[func] is not None and _values_equal(row[func], value)
    ]
    return Fraction(hits[0]) if len(hits) == 1 else None


def _exact_sqrt(value: Value) -> Value:
    """Non-negative square root; exact when the rational is a perfect square."""
    if isinstance(value, Fraction):
        num, den = value.numerator, value.denominator
        if num >= 0:
            rn, rd = math.isqrt(num), math.isqrt(den)
            if rn * rn == num and rd * rd == den:
                return Fraction(rn, rd)
    return math.sqrt(float(value))


class AlgebraSystem:
    """One equation system per problem state; cloned with the state."""

    def __init__(self, system: FormalSystem):
        self.system = system
        self._syms: list[Sym] = []
        self._sym_index: dict[TermTree, int] = {}
        self._equations: list[_Equation] = []
        self._normal_forms: set[tuple] = set()
        # mono -> (value, provider source ids); a mono of one plain sym
        # atom is a solved symbol value
        self._values: dict[tuple, tuple[Value, frozenset[int]]] = {}

    # -- registration -------------------------------------------------

    def register(self, term: TermTree) -> Sym:
        """Idempotent per canonical attribute term; returns a stable Sym."""
        pred = self.system.predicate(term.head)
        if not pred.is_attribute:
            raise AlgebraError(f"{term.head} is not a declared attribute")
        canon = canonicalize(term, self.system)
        idx = self._sym_index.get(canon)
        if idx is None:
            idx = len(self._syms)
            self._sym_index[canon] = idx
            self._syms.append(Sym(canon, idx, render_term(canon, self.system)))
        return self._syms[idx]

    @property
    def syms(self) -> list[Sym]:
        return self._syms

    # -- normalization ------------------------------------------------

    def _normalize(self, tree: TermTree) -> dict[tuple, Value]:
        head = tree.head
        if is_number_token(head) and not tree.args:
            return {(): number_value(head)}
        if head == "+":
            acc = self._normalize(tree.args[0])
            for m, c in self._normalize(tree.args[1]).items():
                _add_term(acc, m, c)
            return acc
        if head == "-":
            acc = self._normalize(tree.args[0])
            for m, c in self._normalize(tree.args[1]).items():
                _add_term(acc, m, -c)
            return acc
        if head == "*":
            return self._multiply(self._normalize(tree.args[0]), self._normalize(tree.args[1]))
        if head == "/":
            den = self._normalize(tree.args[1])
            if set(den) - {()}:
                raise AlgebraError("division by a non-constant expression")
            d = den.get((), _ZERO)
            if _is_zero(d):
                raise AlgebraError("division by zero")
            return {m: c / d for m, c in self._normalize(tree.args[0]).items()}
        if head == "^":
            exp = self._normalize(tree.args[1])
            if set(exp) - {()}:
                raise AlgebraError("exponent must be a constant")
            e = exp.get((), _ZERO)
            if not (isinstance(e, Fraction) and e.denominator == 1 and 1 <= e <= 4):
                raise AlgebraError(f"unsupported exponent {e}")
            acc = self._normalize(tree.args[0])
            result = acc
            for _ in range(int(e) - 1):
                result = self._multiply(result, acc)
            return result
        if head in TRIG_FUNCS:
            inner = self._normalize(tree.args[0])
            monos = set(inner) - {()}
            if not monos:
                value = _trig_eval(head, inner.get((), _ZERO))
                if value is None:
                    raise AlgebraError(f"{head} undefined at that angle")
                return {(): value}
            if len(inner) == 1:
                (mono, coeff), = inner.items()
                if len(mono) == 1 and mono[0][0] == "s" and coeff == 1:
                    return {((("f", head, mono[0][1]),)): Fraction(1)}
            raise AlgebraError(f"{head} argument must be a single attribute or constant")
        if head == EQUAL:
            raise AlgebraError("Equal is not an expression")
        sym = self.register(tree)
        return {(("s", sym.index),): Fraction(1)}

    def _multiply(self, a: dict, b: dict) -> dict:
        acc: dict[tuple, Value] = {}
        for m1, c1 in a.items():
            for m2, c2 in b.items():
                mono = tuple(sorted(m1 + m2))
                if len(mono) > 6:
                    raise AlgebraError("monomial degree above the supported bound")
                _add_term(acc, mono, c1 * c2)
        return acc

    # -- equations ----------------------------------------------------

    def add_equation(self, body: TermTree, source_id: int) -> None:
        """Normalize Equal(lhs, rhs) to lhs - rhs = 0 and append; dedups."""
        if body.head != EQUAL:
            raise AlgebraError(f"expected an Equal body, got head {body.head!r}")
        lin = self._normalize(body.args[0])
        for m, c in self._normalize(body.args[1]).items():
            _add_term(lin, m, -c)
        monos = sorted((m for m in lin if m != ()), key=_mono_key)
        if not monos:
            return  # tautology (or a constant contradiction; nothing to solve)
        lead = lin[monos[0]]
        scaled = tuple(sorted(((m, c / lead) for m, c in lin.items()), key=lambda it: _mono_key(it[0])))
        if scaled in self._normal_forms:
            return
        self._normal_forms.add(scaled)
        self._equations.append(_Equation(scaled, frozenset({source_id})))

    @property
    def num_equations(self) -> int:
        return len(self._equations)

    def clone(self) -> "AlgebraSystem":
        other = AlgebraSystem.__new__(AlgebraSystem)
        other.system = self.system
        other._syms = list(self._syms)
        other._sym_index = dict(self._sym_index)
        other._equations = list(self._equations)
        other._normal_forms = set(self._normal_forms)
        other._values = dict(self._values)
        return other

    # -- solving ------------------------------------------------------

    def _atom_value(self, atom: tuple) -> tuple[Value, frozenset[int]] | None:
        if atom[0] == "s":
            return self._values.get(((atom),))
        # trig atom: evaluable once the inner angle sym is pinned
        _, func, idx = atom
        inner = self._values.get((("s", idx),))
        if inner is None:
            return None
        value = _trig_eval(func, inner[0])
        if value is None:
            return None
        return value, inner[1]

    def _reduce(self, terms, sources) -> tuple[dict, Value, frozenset[int]]:
        """Substitute known values; returns (open terms, constant, providers)."""
        acc: dict[tuple, Value] = {}
        const: Value = _ZERO
        providers = sources
        for mono, coeff in terms:
            if mono == ():
                const = const + coeff
                continue
            known = self._values.get(mono)
            if known is not None:
                const = const + coeff * known[0]
                providers = providers | known[1]
                continue
            remaining = []
            for atom in mono:
                got = self._atom_value(atom)
                if got is not None:
                    coeff = coeff * got[0]
                    providers = providers | got[1]
                else:
                    remaining.append(atom)
            mono2 = tuple(remaining)
            if mono2 == ():
                const = const + coeff
            else:
                _add_term(acc, mono2, coeff)
        return acc, const, providers

    def _pin(self, mono: tuple, value: Value, providers: frozenset[int]) -> bool:
        if mono in self._values:
            return False
        self._values[mono] = (value, providers)
        return True

    def _substitution_pass(self) -> bool:
        changed = False
        for eq in self._equations:
            open_terms, const, providers = self._reduce(eq.terms, eq.sources)
            if len(open_terms) == 1:
                (mono, coeff), = open_terms.items()
                changed |= self._pin(mono, -const / coeff, providers)
        return changed

    def _gauss_pass(self, deadline: float) -> bool:
        rows: list[tuple[dict, Value, frozenset[int]]] = []
        for eq in self._equations:
            open_terms, const, providers = self._reduce(eq.terms, eq.sources)
            if len(open_terms) >= 2:
                rows.append((dict(open_terms), const, providers))
        if not rows:
            return False
        variables = sorted({m for row in rows for m in row[0]}, key=_mono_key)
        rows = self._rref(rows, variables, deadline)
        changed = False
        for terms, const, providers in rows:
            if len(terms) == 1:
                (mono, coeff), = terms.items()
                changed |= self._pin(mono, -const / coeff, providers)
        return changed

    def _rref(self, rows, variables, deadline: float):
        """In-place reduced row echelon form with provenance unions.

        Pivot order is lowest monomial key first; among candidate rows the
        lowest index wins, keeping results deterministic.
        """
        pivot_rows: list[int] = []
        for var in variables:
            if time.monotonic() > deadline:
                break
            pivot = None
            for ri, (terms, _, _) in enumerate(rows):
                if ri not in pivot_rows and var in terms:
                    pivot = ri
                    break
            if pivot is None:
                continue
            terms, const, providers = rows[pivot]
            factor = terms[var]
            terms = {m: c / factor for m, c in terms.items()}
            const = const / factor
            rows[pivot] = (terms, const, providers)
            for ri in range(len(rows)):
                if ri == pivot:
                    continue
                oterms, oconst, oprov = rows[ri]
                f = oterms.get(var)
                if f is None or _is_zero(f):
                    continue
                new_terms = dict(oterms)
                for m, c in terms.items():
                    _add_term(new_terms, m, -f * c)
                new_terms.pop(var, None)
                rows[ri] = (new_terms, oconst - f * const, oprov | providers)
            pivot_rows.append(pivot)
        return rows

    def _nonlinear_pass(self) -> bool:
        """Extract symbol values from pinned powered or trig monomials.

        Quantities are geometric (lengths, measures, perimeters, areas), so
        even roots take the non-negative branch.
        """
        changed = False
        for mono, (value, providers) in list(self._values.items()):
            if len(mono) == 2 and mono[0] == mono[1] and mono[0][0] == "s":
                sym_mono = (mono[0],)
                if sym_mono not in self._values and not (isinstance(value, Fraction) and value < 0):
                    changed |= self._pin(sym_mono, _exact_sqrt(value), providers)
            elif len(mono) == 1 and mono[0][0] == "f":
                _, func, idx = mono[0]
                sym_mono = (("s", idx),)
                if sym_mono not in self._values:
                    angle = _trig_invert(func, value)
                    if angle is not None:
                        changed |= self._pin(sym_mono, angle, providers)
        return changed

    def _run_fixpoint(self, deadline: float) -> bool:
        """Returns True if the budget expired before a confirmed fixpoint."""
        while True:
            if time.monotonic() > deadline:
                return True
            changed = self._substitution_pass()
            if time.monotonic() > deadline:
                return True
            changed |= self._gauss_pass(deadline)
            changed |= self._nonlinear_pass()
            if not changed:
                return False

    def _eval_linear(self, lin: dict) -> tuple[Value, frozenset[int]] | None:
        total: Value = _ZERO
        providers: frozenset[int] = frozenset()
        for mono, coeff in lin.items():
            if mono == ():
                total = total + coeff
                continue
            known = self._values.get(mono)
            if known is None:
                reduced, const, prov = self._reduce(((mono, coeff),), frozenset())
                if reduced:
                    return None
                total = total + const
                providers = providers | prov
                continue
            total = total + coeff * known[0]
            providers = providers | known[1]
        return total, providers

    def _solve_combination(self, lin: dict, deadline: float) -> tuple[Value, frozenset[int]] | None:
        """Pin a linear combination (e.g. a+b) that no single sym resolves."""
        goal_mono = (("g", -1),)
        row_terms: dict[tuple, Value] = {goal_mono: Fraction(1)}
        const: Value = _ZERO
        providers: frozenset[int] = frozenset()
        open_lin, lin_const, providers = self._reduce(
            tuple(lin.items()), frozenset()
        )
        for m, c in open_lin.items():
            _add_term(row_terms, m, -c)
        const = -lin_const
        rows = [(row_terms, const, providers)]
        for eq in self._equations:
            open_terms, econst, eprov = self._reduce(eq.terms, eq.sources)
            if open_terms:
                rows.append((dict(open_terms), econst, eprov))
        variables = sorted({m for row in rows for m in row[0] if m != goal_mono}, key=_mono_key)
        variables.append(goal_mono)
        rows = self._rref(rows, variables, deadline)
        for terms, rconst, rprov in rows:
            if set(terms) == {goal_mono}:
                return -rconst / terms[goal_mono], rprov
        return None

    def solve_value(self, target: TermTree, budget_ms: float) -> SolveResult:
        """Solve a target expression under the time budget.

        The fixpoint extends monotonically: ids in ``used`` are exactly the
        sources of every equation that contributed a pivot or substitution
        on the path to the value.
        """
        deadline = time.monotonic() + budget_ms / 1000.0
        try:
            lin = self._normalize(target)
        except AlgebraError:
            return SolveResult(SolveStatus.UNKNOWN)
        timed_out = self._run_fixpoint(deadline)
        got = self._eval_linear(lin)
        if got is not None:
            return SolveResult(SolveStatus.SOLVED, got[0], got[1])
        if not timed_out:
            combo = self._solve_combination(lin, deadline)
            if combo is not None:
                return SolveResult(SolveStatus.SOLVED, combo[0], combo[1])
            if time.monotonic() > deadline:
                timed_out = True
        return SolveResult(SolveStatus.TIMEOUT if timed_out else SolveStatus.UNKNOWN)

    def equation_holds(self, body: TermTree, budget_ms: float) -> SolveResult:
        """Check whether Equal(lhs, rhs) holds numerically: lhs - rhs == 0."""
        if body.head != EQUAL:
            raise AlgebraError("expected an Equal body")
        diff = TermTree("-", (body.args[0], body.args[1]))
        result = self.solve_value(diff, budget_ms)
        if result.status is SolveStatus.SOLVED and not _is_zero(result.value):
            return SolveResult(SolveStatus.UNKNOWN)
        return result

    def known_values(self) -> dict[Sym, Value]:
        """Symbols with a pinned value at the current fixpoint."""
        out = {}
        for mono, (value, _) in self._values.items():
            if len(mono) == 1 and mono[0][0] == "s":
                out[self._syms[mono[0][1]]] = value
        return out

    def value_providers(self, term: TermTree) -> frozenset[int]:
        canon = canonicalize(term, self.system)
        idx = self._sym_index.get(canon)
        if idx is None:
            return frozenset()
        got = self._values.get((("s", idx),))
        return got[1] if got else frozenset()
