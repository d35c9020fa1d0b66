import random
from fractions import Fraction

import pytest

from tdmc.formula import CnfFormula
from tdmc.oracle import MAX_ORACLE_VARS, brute_force_count, check_equivalent_counts

from helpers import random_formula


def test_examples():
    assert brute_force_count(CnfFormula.from_dimacs(2, [[1, 2]])).exact_count == 3
    assert brute_force_count(CnfFormula.from_dimacs(4, [])).exact_count == 16
    weighted = CnfFormula.from_dimacs(
        1, [[1]], {1: Fraction(1, 4), -1: Fraction(3, 4)}
    )
    assert brute_force_count(weighted).weighted_value == Fraction(1, 4)


def test_empty_clause_and_zero_vars():
    assert brute_force_count(CnfFormula.from_dimacs(3, [[]])).exact_count == 0
    assert brute_force_count(CnfFormula.from_dimacs(0, [])).exact_count == 1


def test_guard():
    with pytest.raises(ValueError):
        brute_force_count(CnfFormula.from_dimacs(MAX_ORACLE_VARS + 1, []))


def test_all_one_weights_match_unweighted():
    rng = random.Random(11)
    for _ in range(200):
        n = rng.randint(1, 10)
        m = rng.randint(0, 3 * n)
        plain = random_formula(rng, n, m)
        ones = {d: Fraction(1) for v in range(1, n + 1) for d in (v, -v)}
        weighted = CnfFormula(plain.num_vars, plain.clauses, None)
        weighted = CnfFormula.from_dimacs(n, plain.clauses_dimacs(), ones)
        r1 = brute_force_count(plain)
        r2 = brute_force_count(weighted)
        assert r2.weighted_value == r1.exact_count
        assert r1.weighted_value == r1.exact_count


def test_check_equivalent_counts():
    f = CnfFormula.from_dimacs(2, [[1, 2], [-1, 2]])
    assert check_equivalent_counts(f, f)
    # sound strengthening: (x1 v x2) & (-x1 v x2)  ==  (x2)
    g = CnfFormula.from_dimacs(2, [[2]])
    assert check_equivalent_counts(f, g)
    # wrongly deleting a non-implied clause must be caught: counts 2 vs 3
    bad = CnfFormula.from_dimacs(2, [[-1, 2]])
    assert not check_equivalent_counts(f, bad)


def test_check_equivalent_counts_multiplier():
    f = CnfFormula.from_dimacs(2, [[1], [1, 2]])  # models: x1=T, x2 free -> 2
    g = CnfFormula.from_dimacs(1, [])  # x2 renumbered, x1 absorbed
    assert check_equivalent_counts(f, g, 1)
    weighted = CnfFormula.from_dimacs(
        2, [[1], [1, 2]], {1: Fraction(3, 10), -1: Fraction(7, 10)}
    )
    reduced = CnfFormula.from_dimacs(1, [], {})
    assert check_equivalent_counts(weighted, reduced, Fraction(3, 10))
