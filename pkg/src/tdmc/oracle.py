"""Brute-force reference counters for tests and acceptance checks.

Deliberately independent of the search engine: satisfiability of every
assignment is evaluated with numpy bit masks, and weighted sums are carried
in exact rational arithmetic so any discrepancy is attributable to the
engine under test.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Union

import numpy as np

from .formula import CnfFormula

MAX_ORACLE_VARS = 24


@dataclass
class OracleResult:
    exact_count: int
    weighted_value: Fraction


def satisfying_mask(formula: CnfFormula) -> np.ndarray:
    """Boolean array over all 2^n assignments; index bit (v-1) is var v."""
    n = formula.num_vars
    if n > MAX_ORACLE_VARS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_VARS} variables, got {n}")
    size = 1 << n
    idx = np.arange(size, dtype=np.uint32)
    acc = np.ones(size, dtype=bool)
    for clause in formula.clauses:
        sat = np.zeros(size, dtype=bool)
        for code in clause:
            v = (code >> 1) + 1
            bit = (idx >> np.uint32(v - 1)) & np.uint32(1)
            sat |= (bit == 0) if (code & 1) else (bit == 1)
        acc &= sat
    return acc


def brute_force_count(formula: CnfFormula) -> OracleResult:
    """Enumerate all assignments; exact count plus exact-rational weighted sum."""
    n = formula.num_vars
    mask = satisfying_mask(formula)
    exact = int(mask.sum())

    if formula.weights is None:
        return OracleResult(exact_count=exact, weighted_value=Fraction(exact))

    # Clear denominators per variable so the inner sum runs on Python ints:
    # weight(v=T) = a_v/d_v, weight(v=F) = b_v/d_v.
    denom = 1
    avals = []
    bvals = []
    for v in range(1, n + 1):
        wpos = formula.weight(2 * (v - 1))
        wneg = formula.weight(2 * (v - 1) + 1)
        d = lcm(wpos.denominator, wneg.denominator)
        avals.append(int(wpos * d))
        bvals.append(int(wneg * d))
        denom *= d

    lo_n = n // 2
    table_lo = [1]
    for v in range(lo_n):
        table_lo = [t * bvals[v] for t in table_lo] + [t * avals[v] for t in table_lo]
    table_hi = [1]
    for v in range(lo_n, n):
        table_hi = [t * bvals[v] for t in table_hi] + [t * avals[v] for t in table_hi]

    total = 0
    rows = mask.reshape(-1, 1 << lo_n) if n else mask.reshape(1, 1)
    for hi, row in enumerate(rows):
        if not row.any():
            continue
        s = 0
        for i in np.flatnonzero(row):
            s += table_lo[i]
        total += table_hi[hi] * s
    return OracleResult(exact_count=exact, weighted_value=Fraction(total, denom))


def check_equivalent_counts(
    original: CnfFormula,
    reduced: CnfFormula,
    multiplier: Union[int, Fraction] = 1,
) -> bool:
    """True iff count(original) == multiplier * count(reduced).

    Weighted formulas compare exact-rational weighted values (each side with
    its own weight map, so weight folding done by preprocessing is honored);
    unweighted compare model counts.
    """
    r1 = brute_force_count(original)
    r2 = brute_force_count(reduced)
    if original.weights is not None:
        return r1.weighted_value == Fraction(multiplier) * r2.weighted_value
    return r1.exact_count == multiplier * r2.exact_count
