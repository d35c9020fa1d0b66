"""CNF data model: packed literals, clause normalization, DIMACS reading/writing.

Literals are packed into non-negative ints: variable v with polarity p
(0 = positive, 1 = negative) becomes 2*(v-1)+p.  Negation is a XOR with 1
and arrays indexed by literal code are dense, which the propagation engines
rely on.  The external representation everywhere (files, test helpers) is
the usual signed DIMACS integer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple


class ParseError(ValueError):
    """Malformed DIMACS input."""


def lit_from_dimacs(n: int) -> int:
    if n == 0:
        raise ValueError("0 is not a literal")
    v = abs(n)
    return 2 * (v - 1) + (1 if n < 0 else 0)


def lit_to_dimacs(code: int) -> int:
    v = (code >> 1) + 1
    return -v if code & 1 else v


def lit_neg(code: int) -> int:
    return code ^ 1


def lit_var(code: int) -> int:
    return (code >> 1) + 1


def lit_is_neg(code: int) -> bool:
    return bool(code & 1)


def make_lit(var: int, negative: bool = False) -> int:
    return 2 * (var - 1) + (1 if negative else 0)


def normalize_clause(lits: Iterable[int]) -> Optional[Tuple[int, ...]]:
    """Collapse duplicate literals (first occurrence kept) and detect tautologies.

    Returns the normalized clause as a tuple of literal codes, or None if the
    clause contains both a literal and its negation.
    """
    seen = set()
    out: List[int] = []
    for l in lits:
        if l in seen:
            continue
        if l ^ 1 in seen:
            return None
        seen.add(l)
        out.append(l)
    return tuple(out)


_ONE = Fraction(1)


class WeightMap(dict):
    """Literal-code -> nonnegative Fraction; absent literals weigh 1."""

    def weight(self, lit: int) -> Fraction:
        return self.get(lit, _ONE)

    def set_weight(self, lit: int, w: Fraction) -> None:
        if w < 0:
            raise ValueError("negative weight")
        self[lit] = w


@dataclass
class CnfFormula:
    """Normalized CNF over variables 1..num_vars.

    Clauses are tuples of literal codes, duplicate-free and tautology-free;
    an empty clause marks the formula unsatisfiable.  ``weights`` is None for
    unweighted formulas.  Instances are treated as immutable after
    construction.
    """

    num_vars: int
    clauses: List[Tuple[int, ...]] = field(default_factory=list)
    weights: Optional[WeightMap] = None

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def weight(self, lit: int) -> Fraction:
        if self.weights is None:
            return _ONE
        return self.weights.weight(lit)

    def occurring_vars(self) -> set:
        occ = set()
        for c in self.clauses:
            for l in c:
                occ.add((l >> 1) + 1)
        return occ

    @property
    def free_var_count(self) -> int:
        return self.num_vars - len(self.occurring_vars())

    def has_empty_clause(self) -> bool:
        return any(len(c) == 0 for c in self.clauses)

    def clauses_dimacs(self) -> List[List[int]]:
        return [[lit_to_dimacs(l) for l in c] for c in self.clauses]

    @classmethod
    def from_dimacs(
        cls,
        num_vars: int,
        clauses: Iterable[Iterable[int]],
        weights: Optional[Dict[int, Fraction]] = None,
    ) -> "CnfFormula":
        """Build a normalized formula from signed-integer clauses.

        ``weights`` maps signed DIMACS literals to Fractions; passing a dict
        (even empty) makes the formula weighted.
        """
        norm: List[Tuple[int, ...]] = []
        seen = set()
        for c in clauses:
            nc = normalize_clause([lit_from_dimacs(x) for x in c])
            if nc is None:
                continue
            key = frozenset(nc)
            if key in seen:
                continue
            seen.add(key)
            norm.append(nc)
        wm = None
        if weights is not None:
            wm = WeightMap()
            for d, w in weights.items():
                wm.set_weight(lit_from_dimacs(d), Fraction(w))
        return cls(num_vars=num_vars, clauses=norm, weights=wm)


def _parse_weight(token: str) -> Fraction:
    try:
        w = Fraction(token)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"non-numeric weight {token!r}") from exc
    if w < 0:
        raise ParseError(f"negative weight {token!r}")
    return w


def parse_input(text, mode: str = "auto") -> CnfFormula:
    """Parse DIMACS CNF with ``c p weight <lit> <w> 0`` extension lines.

    mode: "auto" selects weighted iff any weight line is present, "mc" forces
    unweighted (weight lines are checked for well-formedness but dropped),
    "wmc" forces weighted.  Tolerates \\r\\n endings and repeated whitespace;
    one zero-terminated clause per line; the header clause count must match.
    """
    if mode not in ("auto", "mc", "wmc"):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")

    num_vars = -1
    declared_clauses = -1
    raw_clause_count = 0
    clauses: List[Tuple[int, ...]] = []
    seen_clauses = set()
    weight_lines: List[Tuple[int, Fraction]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] == "c":
            if len(tokens) >= 2 and tokens[1] == "p":
                if len(tokens) >= 3 and tokens[2] == "show":
                    raise ParseError(
                        f"line {lineno}: projected counting scopes "
                        "('c p show') are not supported"
                    )
                if len(tokens) >= 3 and tokens[2] == "weight":
                    if len(tokens) != 6 or tokens[5] != "0":
                        raise ParseError(
                            f"line {lineno}: weight line must be "
                            "'c p weight <lit> <w> 0'"
                        )
                    try:
                        d = int(tokens[3])
                    except ValueError as exc:
                        raise ParseError(
                            f"line {lineno}: bad weight literal {tokens[3]!r}"
                        ) from exc
                    if d == 0:
                        raise ParseError(f"line {lineno}: weight line for variable 0")
                    weight_lines.append((d, _parse_weight(tokens[4])))
            continue
        if tokens[0] == "p":
            if num_vars >= 0:
                raise ParseError(f"line {lineno}: duplicate header")
            if len(tokens) != 4 or tokens[1] != "cnf":
                raise ParseError(f"line {lineno}: malformed header {raw!r}")
            try:
                num_vars = int(tokens[2])
                declared_clauses = int(tokens[3])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: malformed header {raw!r}") from exc
            if num_vars < 0 or declared_clauses < 0:
                raise ParseError(f"line {lineno}: negative header counts")
            continue
        # clause line
        if num_vars < 0:
            raise ParseError(f"line {lineno}: clause before 'p cnf' header")
        try:
            ints = [int(t) for t in tokens]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad clause token") from exc
        if ints[-1] != 0:
            raise ParseError(f"line {lineno}: clause not terminated by 0")
        if 0 in ints[:-1]:
            raise ParseError(f"line {lineno}: clause not terminated by 0 (embedded 0)")
        raw_clause_count += 1
        for d in ints[:-1]:
            if abs(d) > num_vars:
                raise ParseError(
                    f"line {lineno}: literal {d} exceeds declared "
                    f"variable count {num_vars}"
                )
        nc = normalize_clause([lit_from_dimacs(d) for d in ints[:-1]])
        if nc is None:
            continue  # tautology
        key = frozenset(nc)
        if key in seen_clauses:
            continue  # duplicate clause
        seen_clauses.add(key)
        clauses.append(nc)

    if num_vars < 0:
        raise ParseError("missing 'p cnf' header")
    if raw_clause_count != declared_clauses:
        raise ParseError(
            f"clause count mismatch: header says {declared_clauses}, "
            f"found {raw_clause_count}"
        )

    weighted = mode == "wmc" or (mode == "auto" and bool(weight_lines))
    wm: Optional[WeightMap] = WeightMap() if weighted else None
    for d, w in weight_lines:
        if abs(d) > num_vars:
            raise ParseError(f"weight line literal {d} exceeds variable count")
        if wm is not None:
            wm.set_weight(lit_from_dimacs(d), w)

    return CnfFormula(num_vars=num_vars, clauses=clauses, weights=wm)


def _format_weight(w: Fraction) -> str:
    """Exact decimal when the denominator is 2^a*5^b, else 'p/q'."""
    den = w.denominator
    twos = fives = 0
    rest = den
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        return f"{w.numerator}/{w.denominator}"
    k = max(twos, fives)
    scaled = w.numerator * 10**k // den
    if k == 0:
        return str(scaled)
    s = str(scaled).rjust(k + 1, "0")
    out = s[:-k] + "." + s[-k:]
    return out.rstrip("0").rstrip(".")


def write_cnf(formula: CnfFormula) -> str:
    """Emit the DIMACS form; parse_input maps it back to an equal formula."""
    lines = [f"p cnf {formula.num_vars} {len(formula.clauses)}"]
    if formula.weights is not None:
        for code in sorted(formula.weights):
            lines.append(
                f"c p weight {lit_to_dimacs(code)} "
                f"{_format_weight(formula.weights[code])} 0"
            )
    for c in formula.clauses:
        lines.append(" ".join(str(lit_to_dimacs(l)) for l in c) + " 0")
    return "\n".join(lines) + "\n"
