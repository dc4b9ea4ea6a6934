"""Randomized consistency sweep for the equation solver.

Builds linear systems with a known ground-truth assignment, feeds them in
shuffled order with redundant extras, and checks exact recovery, stable
`used` provenance, and re-solvability from the provenance alone.
"""

import random
from fractions import Fraction

from geosolver.algebra import AlgebraSystem, SolveStatus
from geosolver.formal import TermTree


def length_term(i: int) -> TermTree:
    # distinct two-letter lines: AB, AC, ..., AZ, BC, BD, ...
    first = chr(ord("A") + i // 10)
    second = chr(ord("Q") + i % 10)
    return TermTree("LengthOfLine", (TermTree(first), TermTree(second)))


def lit(value: Fraction) -> TermTree:
    if value.denominator == 1:
        return TermTree(str(value.numerator))
    return TermTree("/", (TermTree(str(value.numerator)), TermTree(str(value.denominator))))


def equal(lhs: TermTree, rhs: TermTree) -> TermTree:
    return TermTree("Equal", (lhs, rhs))


def build_system(rng: random.Random, tiny_system, n_syms: int):
    """Ground-truth values plus equations that pin them all."""
    truth = [Fraction(rng.randint(1, 40), rng.randint(1, 6)) for _ in range(n_syms)]
    equations: list[TermTree] = []
    for i in range(n_syms):
        if i == 0 or rng.random() < 0.3:
            equations.append(equal(length_term(i), lit(truth[i])))
            continue
        j = rng.randrange(i)
        coeff = Fraction(rng.randint(1, 5))
        offset = truth[i] - coeff * truth[j]
        combo = TermTree("+", (
            TermTree("*", (lit(coeff), length_term(j))),
            lit(offset),
        ))
        equations.append(equal(length_term(i), combo))
    # redundant but consistent extras
    for _ in range(rng.randrange(3)):
        i, j = rng.randrange(n_syms), rng.randrange(n_syms)
        combo = TermTree("+", (length_term(i), length_term(j)))
        equations.append(equal(combo, lit(truth[i] + truth[j])))
    rng.shuffle(equations)
    alg = AlgebraSystem(tiny_system)
    for k, eq in enumerate(equations):
        alg.add_equation(eq, k)
    return alg, truth, equations


def test_random_linear_systems_recover_exact_values(tiny_system):
    rng = random.Random(2026)
    for trial in range(40):
        n_syms = rng.randint(2, 8)
        alg, truth, equations = build_system(rng, tiny_system, n_syms)
        for i in range(n_syms):
            result = alg.solve_value(length_term(i), 500)
            assert result.status is SolveStatus.SOLVED, (trial, i)
            assert result.value == truth[i], (trial, i)
            # provenance sufficiency: the used equations alone re-derive it
            replay = AlgebraSystem(tiny_system)
            for k in sorted(result.used):
                replay.add_equation(equations[k], k)
            again = replay.solve_value(length_term(i), 500)
            assert again.status is SolveStatus.SOLVED, (trial, i)
            assert again.value == truth[i], (trial, i)


def test_identical_systems_solve_identically(tiny_system):
    rng_a, rng_b = random.Random(77), random.Random(77)
    alg_a, _, _ = build_system(rng_a, tiny_system, 6)
    alg_b, _, _ = build_system(rng_b, tiny_system, 6)
    for i in range(6):
        ra = alg_a.solve_value(length_term(i), 500)
        rb = alg_b.solve_value(length_term(i), 500)
        assert ra.status == rb.status
        assert ra.value == rb.value
        assert ra.used == rb.used


def test_quadratic_chains_resolve_forward(tiny_system):
    # c_{k+1}^2 = c_k^2 + 2k+1 with c_0 = 0 gives c_k = k exactly
    rng = random.Random(5)
    alg = AlgebraSystem(tiny_system)
    alg.add_equation(equal(length_term(0), lit(Fraction(0))), 0)
    for k in range(1, 8):
        lhs = TermTree("^", (length_term(k), TermTree("2")))
        rhs = TermTree("+", (
            TermTree("^", (length_term(k - 1), TermTree("2"))),
            lit(Fraction(2 * k - 1)),
        ))
        alg.add_equation(equal(lhs, rhs), k)
    order = list(range(8))
    rng.shuffle(order)
    for k in order:
        result = alg.solve_value(length_term(k), 1000)
        assert result.status is SolveStatus.SOLVED
        assert result.value == k
