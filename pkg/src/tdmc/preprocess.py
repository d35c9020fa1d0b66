"""Count-preserving CNF preprocessing.

Five stages, applied in this order: propagation-based vivification, complete
vivification (which also extracts the backbone), sparsification, equivalence
merging, and definability-based variable elimination (unweighted formulas
only).  Every stage preserves the (weighted) model count; merging and
elimination are additionally restricted so that they never enlarge the
primal graph beyond edge contraction, keeping the formula's treewidth from
growing.

Accounting: backbone variables are absorbed by unit propagation and
contribute their forced literal's weight to a running multiplier; merged and
eliminated variables contribute factor one.  Free variables survive in the
output formula and are handled by the counter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from .formula import CnfFormula, WeightMap, _format_weight, make_lit, normalize_clause
from .sat import Solver

DEFAULT_QUERY_CONFLICTS = 10_000
DEFAULT_TIME_BUDGET = 60.0

_STAGES = ("vivify_prop", "vivify_complete", "sparsify", "merge_equiv", "elim_def")


@dataclass
class PreprocessConfig:
    vivify_prop: bool = True
    vivify_complete: bool = True
    sparsify: bool = True
    merge_equiv: bool = True
    elim_def: bool = True
    per_query_conflicts: int = DEFAULT_QUERY_CONFLICTS
    time_budget: float = DEFAULT_TIME_BUDGET


@dataclass
class StageFragment:
    """Result of a variable-removing stage, renumbered to consecutive ids."""

    formula: CnfFormula
    var_map: Dict[int, int]  # surviving original var -> new var
    removed_vars: Set[int]
    multiplier: Union[int, Fraction]
    merged_into: Dict[int, int] = field(default_factory=dict)  # removed -> survivor


@dataclass
class PreprocessResult:
    formula: CnfFormula
    multiplier: Union[int, Fraction]
    eliminated_vars: Set[int]
    var_map: Dict[int, int]
    stats: Dict[str, Dict[str, int]]
    unsat: bool = False


def _new_stats() -> Dict[str, Dict[str, int]]:
    return {
        name: {
            "literals_removed": 0,
            "clauses_removed": 0,
            "merges": 0,
            "eliminations": 0,
            "backbone": 0,
        }
        for name in _STAGES
    }


class _State:
    """Mutable pipeline state in the original variable numbering."""

    def __init__(self, formula: CnfFormula):
        self.num_vars = formula.num_vars
        self.clauses: List[Tuple[int, ...]] = [tuple(c) for c in formula.clauses]
        self.weights: Optional[WeightMap] = (
            WeightMap(formula.weights) if formula.weights is not None else None
        )
        self.removed: Dict[int, str] = {}
        self.merged_into: Dict[int, int] = {}
        self.multiplier: Union[int, Fraction] = (
            Fraction(1) if formula.weights is not None else 1
        )
        self.unsat = any(len(c) == 0 for c in self.clauses)

    def weight(self, lit: int) -> Fraction:
        if self.weights is None:
            return Fraction(1)
        return self.weights.weight(lit)

    def dedupe(self) -> None:
        seen = set()
        out = []
        for c in self.clauses:
            key = frozenset(c)
            if key in seen:
                continue
            seen.add(key)
            out.append(c)
        self.clauses = out

    def adjacency(self) -> List[Set[int]]:
        adj: List[Set[int]] = [set() for _ in range(self.num_vars + 1)]
        for c in self.clauses:
            vs = [(l >> 1) + 1 for l in c]
            for i in range(len(vs)):
                for j in range(i + 1, len(vs)):
                    if vs[i] != vs[j]:
                        adj[vs[i]].add(vs[j])
                        adj[vs[j]].add(vs[i])
        return adj

    def to_formula(self) -> CnfFormula:
        return CnfFormula(
            num_vars=self.num_vars,
            clauses=list(self.clauses),
            weights=WeightMap(self.weights) if self.weights is not None else None,
        )


class _Deadline:
    def __init__(self, seconds: Optional[float]):
        self.at = None if seconds is None else time.monotonic() + seconds

    def expired(self) -> bool:
        return self.at is not None and time.monotonic() > self.at


_NO_DEADLINE = _Deadline(None)


# --------------------------------------------------------------- vivification


def _vivify(
    state: _State,
    stats: Dict[str, int],
    complete: bool,
    budget: int,
    deadline: _Deadline,
    max_passes: Optional[int],
) -> None:
    """Strengthen clauses by implication checks; ``complete`` adds backbone units.

    The clause under test is excluded from propagation.  With a complete
    solver the shared instance keeps its learned clauses: they are
    consequences of the full formula, so an UNSAT answer still certifies the
    implication and the strengthened formula stays logically equivalent.
    """
    if state.unsat:
        return
    passes = 0
    changed = True
    while changed and (max_passes is None or passes < max_passes):
        changed = False
        passes += 1
        solver = Solver(state.num_vars, state.clauses)
        refs = list(solver.clauses)
        ci = 0
        while ci < len(state.clauses):
            if deadline.expired():
                return
            c = state.clauses[ci]
            i = 0
            while i < len(c):
                if deadline.expired():
                    return
                l = c[i]
                rest = [x for x in c if x != l]
                assumptions = [x ^ 1 for x in rest]
                if len(c) == 1:
                    # a unit's own propagation cannot be detached; query fresh
                    others = state.clauses[:ci] + state.clauses[ci + 1 :]
                    q = Solver(state.num_vars, others)
                    if complete:
                        implied = q.solve(assumptions, budget).status == "unsat"
                    else:
                        implied = q.propagate_check(assumptions).conflict
                else:
                    ref = refs[ci]
                    ref.detached = True
                    if complete:
                        implied = solver.solve(assumptions, budget).status == "unsat"
                    else:
                        implied = solver.propagate_check(assumptions).conflict
                    ref.detached = False
                if implied:
                    stats["literals_removed"] += 1
                    c = tuple(rest)
                    state.clauses[ci] = c
                    changed = True
                    if not c:
                        state.unsat = True
                        return
                    refs[ci].detached = True
                    refs[ci].deleted = True
                    refs[ci] = solver.add_clause(list(c))
                    if not solver.ok:
                        state.unsat = True
                        return
                    i = 0
                else:
                    i += 1
            ci += 1

        if complete:
            occurring = sorted({(l >> 1) + 1 for c in state.clauses for l in c})
            present = {frozenset(c) for c in state.clauses}
            for v in occurring:
                if deadline.expired():
                    return
                pos = make_lit(v)
                neg = pos ^ 1
                for probe, unit in ((pos, neg), (neg, pos)):
                    if frozenset((unit,)) in present:
                        continue
                    if solver.solve([probe], budget).status == "unsat":
                        state.clauses.append((unit,))
                        present.add(frozenset((unit,)))
                        solver.add_clause([unit])
                        stats["backbone"] += 1
                        changed = True
                        if frozenset((unit ^ 1,)) in present or not solver.ok:
                            state.unsat = True
                            return

        before = len(state.clauses)
        state.dedupe()
        stats["clauses_removed"] += before - len(state.clauses)


# -------------------------------------------------------------- sparsification


def _sparsify(
    state: _State, stats: Dict[str, int], budget: int, deadline: _Deadline
) -> None:
    """Drop clauses implied by the rest; longest first, committed immediately.

    Each redundancy query runs on a fresh solver over exactly the remaining
    clauses: clauses learned while the candidate was attached may depend on
    it and must not decide its own redundancy.
    """
    if state.unsat:
        return
    order = sorted(
        range(len(state.clauses)),
        key=lambda i: (-len(state.clauses[i]), -i),
    )
    alive = [True] * len(state.clauses)
    for ci in order:
        if deadline.expired():
            break
        c = state.clauses[ci]
        others = [state.clauses[j] for j in range(len(state.clauses)) if alive[j] and j != ci]
        res = Solver(state.num_vars, others).solve([l ^ 1 for l in c], budget)
        if res.status == "unsat":
            alive[ci] = False
            stats["clauses_removed"] += 1
    state.clauses = [c for i, c in enumerate(state.clauses) if alive[i]]


# ---------------------------------------------------------- equivalence merge


def _weight_pair(state: _State, v: int) -> Tuple[Fraction, Fraction]:
    pos = make_lit(v)
    return (state.weight(pos), state.weight(pos ^ 1))


def _merge_equivalences(
    state: _State, stats: Dict[str, int], budget: int, deadline: _Deadline
) -> None:
    """Contract primal edges whose endpoints are equivalent variables.

    The merged variable's weight pair is folded into the survivor's, so the
    weighted count is unchanged; in weighted mode only pairs with equal
    weight pairs are considered at all.
    """
    if state.unsat:
        return
    changed = True
    while changed:
        changed = False
        adj = state.adjacency()
        edges = sorted(
            (x, y) for x in range(1, state.num_vars + 1) for y in adj[x] if x < y
        )
        solver = Solver(state.num_vars, state.clauses)
        for x, y in edges:
            if deadline.expired():
                return
            if state.weights is not None and _weight_pair(state, x) != _weight_pair(
                state, y
            ):
                continue
            xp, yp = make_lit(x), make_lit(y)
            if solver.solve([xp, yp ^ 1], budget).status != "unsat":
                continue
            if solver.solve([xp ^ 1, yp], budget).status != "unsat":
                continue
            # y == x in every model: substitute and drop y
            new_clauses: List[Tuple[int, ...]] = []
            for c in state.clauses:
                lits = [
                    (xp | (l & 1)) if (l >> 1) + 1 == y else l
                    for l in c
                ]
                nc = normalize_clause(lits)
                if nc is not None:
                    new_clauses.append(nc)
            state.clauses = new_clauses
            state.dedupe()
            if state.weights is not None:
                wy_pos, wy_neg = _weight_pair(state, y)
                wx_pos, wx_neg = _weight_pair(state, x)
                state.weights[xp] = wx_pos * wy_pos
                state.weights[xp ^ 1] = wx_neg * wy_neg
                state.weights.pop(yp, None)
                state.weights.pop(yp ^ 1, None)
            state.removed[y] = "merged"
            state.merged_into[y] = x
            stats["merges"] += 1
            changed = True
            break  # graph changed: rebuild and re-examine from the start


# ------------------------------------------------- definability elimination


def _build_doubled_solver(state: _State) -> Solver:
    """F plus a full renamed copy, with selector-guarded equality clauses.

    Variable v's copy is v+n and its selector is v+2n; assuming the selector
    activates v == v+n.  Assumption sets then express any Padoa-style
    definability query without rebuilding.
    """
    n = state.num_vars
    clauses: List[Sequence[int]] = list(state.clauses)
    for c in state.clauses:
        clauses.append(tuple(2 * ((l >> 1) + n) + (l & 1) for l in c))
    occurring = {(l >> 1) + 1 for c in state.clauses for l in c}
    for v in sorted(occurring):
        vp = make_lit(v)
        cp = make_lit(v + n)
        sp = make_lit(v + 2 * n)
        clauses.append((sp ^ 1, vp ^ 1, cp))
        clauses.append((sp ^ 1, vp, cp ^ 1))
    return Solver(3 * n, clauses)


def _eliminate_defined(
    state: _State, stats: Dict[str, int], budget: int, deadline: _Deadline
) -> None:
    """Eliminate variables defined by their (clique) primal neighborhood.

    Definability of x from N(x) is decided by a two-copy query: if
    F(V) and its copy F(V') agree on N(x) yet can disagree on x, x is not
    defined.  A defined x is removed by pairwise resolution, which only adds
    clauses inside N(x); the clique guard therefore keeps the primal edge set
    from growing.  Unweighted formulas only.
    """
    if state.unsat or state.weights is not None:
        return
    doubled: Optional[Solver] = None
    n = state.num_vars
    for x in range(1, n + 1):
        if x in state.removed:
            continue
        if deadline.expired():
            return
        pos_cl = [c for c in state.clauses if make_lit(x) in c]
        neg_cl = [c for c in state.clauses if make_lit(x) ^ 1 in c]
        if not pos_cl and not neg_cl:
            continue
        adj = state.adjacency()
        nbrs = sorted(adj[x])
        if any(w not in adj[u] for i, u in enumerate(nbrs) for w in nbrs[i + 1 :]):
            continue  # eliminating x would add primal edges
        if doubled is None:
            doubled = _build_doubled_solver(state)
        assumptions = [make_lit(y + 2 * n) for y in nbrs]
        assumptions += [make_lit(x), make_lit(x + n) ^ 1]
        if doubled.solve(assumptions, budget).status != "unsat":
            continue
        # x is a function of its neighborhood: resolve it away
        others = [c for c in state.clauses if c not in pos_cl and c not in neg_cl]
        resolvents: List[Tuple[int, ...]] = []
        seen = {frozenset(c) for c in others}
        for cp in pos_cl:
            for cn in neg_cl:
                r = normalize_clause(
                    [l for l in cp if l != make_lit(x)]
                    + [l for l in cn if l != (make_lit(x) ^ 1)]
                )
                if r is None or frozenset(r) in seen:
                    continue
                seen.add(frozenset(r))
                resolvents.append(r)
        kept: List[Tuple[int, ...]] = []
        base_sets = [set(c) for c in others]
        for r in sorted(resolvents, key=lambda r: (len(r), r)):
            rs = set(r)
            if any(bs <= rs for bs in base_sets if bs != rs):
                continue  # subsumed resolvent
            if any(set(k) < rs for k in kept):
                continue
            kept.append(r)
        state.clauses = others + kept
        state.removed[x] = "defined"
        stats["eliminations"] += 1
        doubled = None  # formula changed


# ------------------------------------------------------------- unit handling


def _absorb_units(state: _State, stats: Dict[str, int]) -> None:
    """Apply unit clauses, removing forced variables with weight accounting."""
    if state.unsat:
        return
    while True:
        forced: Dict[int, int] = {}
        for c in state.clauses:
            if len(c) == 1:
                l = c[0]
                v = (l >> 1) + 1
                if forced.get(v, l) != l:
                    state.unsat = True
                    return
                forced[v] = l
        if not forced:
            return
        true_lits = set(forced.values())
        new_clauses: List[Tuple[int, ...]] = []
        for c in state.clauses:
            if any(l in true_lits for l in c):
                continue
            filtered = tuple(l for l in c if l ^ 1 not in true_lits)
            if not filtered:
                state.unsat = True
                return
            new_clauses.append(filtered)
        for v, l in forced.items():
            if state.weights is not None:
                state.multiplier *= state.weights.weight(l)
                state.weights.pop(l, None)
                state.weights.pop(l ^ 1, None)
            state.removed[v] = "backbone"
            stats["backbone"] += 1
        state.clauses = new_clauses
        state.dedupe()


# ----------------------------------------------------------------- renumber


def _renumber(state: _State) -> Tuple[CnfFormula, Dict[int, int]]:
    survivors = [v for v in range(1, state.num_vars + 1) if v not in state.removed]
    var_map = {old: new for new, old in enumerate(survivors, start=1)}
    clauses = []
    for c in state.clauses:
        clauses.append(
            tuple(2 * (var_map[(l >> 1) + 1] - 1) + (l & 1) for l in c)
        )
    weights = None
    if state.weights is not None:
        weights = WeightMap()
        for code, w in state.weights.items():
            v = (code >> 1) + 1
            weights[2 * (var_map[v] - 1) + (code & 1)] = w
    return CnfFormula(len(survivors), clauses, weights), var_map


_UNSAT_FORMULA_CLAUSES: List[Tuple[int, ...]] = [()]


def _unsat_result(state: _State, stats) -> PreprocessResult:
    weights = WeightMap() if state.weights is not None else None
    return PreprocessResult(
        formula=CnfFormula(0, [()], weights),
        multiplier=state.multiplier,
        eliminated_vars=set(state.removed),
        var_map={},
        stats=stats,
        unsat=True,
    )


# ------------------------------------------------------------- public stages


def vivify_propagation(formula: CnfFormula, max_passes: int = 3) -> CnfFormula:
    """Strengthen clauses via unit-propagation implication checks."""
    state = _State(formula)
    stats = _new_stats()["vivify_prop"]
    _vivify(state, stats, complete=False, budget=0, deadline=_NO_DEADLINE,
            max_passes=max_passes)
    if state.unsat:
        state.clauses = [()]
    return state.to_formula()


def vivify_complete(
    formula: CnfFormula, per_query_budget: int = DEFAULT_QUERY_CONFLICTS
) -> CnfFormula:
    """Vivification with a complete solver; also adds backbone units."""
    state = _State(formula)
    stats = _new_stats()["vivify_complete"]
    _vivify(state, stats, complete=True, budget=per_query_budget,
            deadline=_NO_DEADLINE, max_passes=None)
    if state.unsat:
        state.clauses = [()]
    return state.to_formula()


def sparsify(
    formula: CnfFormula, per_query_budget: int = DEFAULT_QUERY_CONFLICTS
) -> CnfFormula:
    """Remove clauses implied by the remaining clauses."""
    state = _State(formula)
    stats = _new_stats()["sparsify"]
    _sparsify(state, stats, per_query_budget, _NO_DEADLINE)
    return state.to_formula()


def merge_equivalences(
    formula: CnfFormula, per_query_budget: int = DEFAULT_QUERY_CONFLICTS
) -> StageFragment:
    """Merge equivalent adjacent variables; result is renumbered."""
    state = _State(formula)
    stats = _new_stats()["merge_equiv"]
    _merge_equivalences(state, stats, per_query_budget, _NO_DEADLINE)
    out, var_map = _renumber(state)
    resolved = {}
    for y, x in state.merged_into.items():
        while x in state.merged_into:
            x = state.merged_into[x]
        resolved[y] = x
    return StageFragment(
        formula=out,
        var_map=var_map,
        removed_vars=set(state.removed),
        multiplier=state.multiplier,
        merged_into=resolved,
    )


def eliminate_defined(
    formula: CnfFormula, per_query_budget: int = DEFAULT_QUERY_CONFLICTS
) -> StageFragment:
    """Eliminate neighborhood-defined variables (unweighted formulas only)."""
    if formula.weights is not None:
        raise ValueError("definability elimination requires an unweighted formula")
    state = _State(formula)
    stats = _new_stats()["elim_def"]
    _eliminate_defined(state, stats, per_query_budget, _NO_DEADLINE)
    out, var_map = _renumber(state)
    return StageFragment(
        formula=out,
        var_map=var_map,
        removed_vars=set(state.removed),
        multiplier=state.multiplier,
    )


def run_pipeline(
    formula: CnfFormula, config: Optional[PreprocessConfig] = None
) -> PreprocessResult:
    """All enabled stages in order, with unit absorption in between."""
    cfg = config or PreprocessConfig()
    state = _State(formula)
    stats = _new_stats()
    deadline = _Deadline(cfg.time_budget)
    budget = cfg.per_query_conflicts

    def done() -> bool:
        return state.unsat or deadline.expired()

    _absorb_units(state, stats["vivify_prop"])
    if cfg.vivify_prop and not done():
        _vivify(state, stats["vivify_prop"], False, 0, deadline, max_passes=3)
        _absorb_units(state, stats["vivify_prop"])
    if cfg.vivify_complete and not done():
        _vivify(state, stats["vivify_complete"], True, budget, deadline, None)
        _absorb_units(state, stats["vivify_complete"])
    if cfg.sparsify and not done():
        _sparsify(state, stats["sparsify"], budget, deadline)
        _absorb_units(state, stats["sparsify"])
    if cfg.merge_equiv and not done():
        _merge_equivalences(state, stats["merge_equiv"], budget, deadline)
        _absorb_units(state, stats["merge_equiv"])
    if cfg.elim_def and state.weights is None and not done():
        _eliminate_defined(state, stats["elim_def"], budget, deadline)
        _absorb_units(state, stats["elim_def"])

    if state.unsat:
        return _unsat_result(state, stats)
    out, var_map = _renumber(state)
    return PreprocessResult(
        formula=out,
        multiplier=state.multiplier,
        eliminated_vars=set(state.removed),
        var_map=var_map,
        stats=stats,
        unsat=False,
    )


def format_preproc_comments(result: PreprocessResult) -> str:
    """Comment block recording the multiplier and variable map for dumps."""
    mult = result.multiplier
    text = _format_weight(mult) if isinstance(mult, Fraction) else str(mult)
    lines = [f"c t pp-multiplier {text}"]
    for old in sorted(result.var_map):
        lines.append(f"c t pp-map {old} {result.var_map[old]}")
    return "\n".join(lines) + "\n"
