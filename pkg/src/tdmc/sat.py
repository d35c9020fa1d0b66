"""Embedded CDCL SAT solver.

Two-watched-literal propagation, 1-UIP conflict analysis with
non-chronological backjumping, Luby restarts (unit 64), exponential VSIDS
(decay 0.95, bump 1.0, rescale at 1e100) and an LBD-managed learned-clause
database.  Glue clauses (lbd <= 3) are never deleted and the deletion pass
works purely on the (lbd, activity, age) order, so it keeps deleting even
when every score is equal.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .formula import CnfFormula

GLUE_LBD = 3
TARGET_MIN = 2_000
TARGET_MAX = 150_000
VAR_DECAY = 0.95
CLAUSE_DECAY = 0.999
RESCALE_LIMIT = 1e100
LUBY_UNIT = 64


class Clause:
    """A clause under watch; position 0 and 1 are the watched literals.

    ``deleted`` drops the clause from watch lists lazily; ``detached`` skips
    it during propagation but keeps its watches, for temporary exclusion.
    """

    __slots__ = ("lits", "learnt", "lbd", "activity", "deleted", "detached", "index")

    def __init__(self, lits: Sequence[int], learnt: bool = False, index: int = -1):
        self.lits = list(lits)
        self.learnt = learnt
        self.lbd = 0
        self.activity = 0.0
        self.deleted = False
        self.detached = False
        self.index = index

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        kind = "L" if self.learnt else "O"
        return f"<{kind}{self.index} {self.lits} lbd={self.lbd}>"


@dataclass
class SolverStats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    learned_deleted: int = 0


@dataclass
class PropagationResult:
    conflict: bool
    literals: FrozenSet[int] = frozenset()


@dataclass
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Dict[int, bool]] = None


def luby(i: int) -> int:
    """i-th term (1-based) of the Luby restart sequence 1,1,2,1,1,2,4,..."""
    x = i - 1
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x %= size
    return 1 << seq


def compute_lbd(lits: Iterable[int], levels: Sequence[int]) -> int:
    """Number of distinct decision levels among the clause's literals.

    ``levels`` is indexed by variable; -1 means unassigned and is an error.
    """
    seen = set()
    for l in lits:
        lv = levels[(l >> 1) + 1]
        if lv < 0:
            raise ValueError("unassigned literal in clause")
        seen.add(lv)
    return len(seen)


def reduce_learned(learned: List[Clause], target: int, locked=frozenset()) -> List[Clause]:
    """Shrink the learned store toward ``target``.

    Glue clauses (lbd <= GLUE_LBD) and clauses in ``locked`` (currently a
    propagation reason) are always kept; the rest are ranked by
    (lbd, -activity, index) and kept until the store holds
    max(target, #glue) clauses.  Dropped clauses get ``deleted`` set so watch
    lists can skip them lazily.
    """
    glue = [c for c in learned if c.lbd <= GLUE_LBD]
    rest = [c for c in learned if c.lbd > GLUE_LBD]
    keep_n = max(target, len(glue))
    kept = list(glue)
    for c in sorted(rest, key=lambda c: (c.lbd, -c.activity, c.index)):
        if len(kept) < keep_n or c in locked:
            kept.append(c)
        else:
            c.deleted = True
    return kept


def adjust_learned_target(stats: SolverStats, learned: Sequence[Clause], current: int) -> int:
    """Grow/shrink the desired store size from the glue fraction.

    Fraction of stored clauses with lbd <= 3 above 0.5 grows the target by
    10%, below 0.1 shrinks it by 10%; result clamped to [2000, 150000].
    """
    new = current
    if learned:
        glue_frac = sum(1 for c in learned if c.lbd <= GLUE_LBD) / len(learned)
        if glue_frac > 0.5:
            new = int(current * 1.1)
        elif glue_frac < 0.1:
            new = int(current * 0.9)
    return min(TARGET_MAX, max(TARGET_MIN, new))


class Solver:
    """CDCL solver over packed literals (formula.py encoding).

    A solver instance is single-threaded.  ``solve`` may be called repeatedly
    with different assumptions; learned clauses persist across calls.
    """

    def __init__(
        self,
        num_vars: int,
        clauses: Iterable[Sequence[int]] = (),
        learned_target: int = 10_000,
        reduce_interval: int = 2_048,
        drat=None,
    ):
        nv = num_vars
        self.num_vars = nv
        self.assign = [0] * (2 * nv)  # per literal: 1 true, -1 false, 0 undef
        self.level = [-1] * (nv + 1)
        self.reason: List[Optional[Clause]] = [None] * (nv + 1)
        self.watches: List[List[Clause]] = [[] for _ in range(2 * nv)]
        self.trail: List[int] = []
        self.trail_lim: List[int] = []
        self.qhead = 0
        self.activity = [0.0] * (nv + 1)
        self.phase = [False] * (nv + 1)
        self.var_inc = 1.0
        self.cla_inc = 1.0
        self.heap: List[Tuple[float, int]] = [(0.0, v) for v in range(1, nv + 1)]
        self.clauses: List[Clause] = []
        self.learned: List[Clause] = []
        self.learned_target = learned_target
        self.reduce_interval = reduce_interval
        self._clause_counter = 0
        self.stats = SolverStats()
        self.ok = True
        self.drat = drat
        for c in clauses:
            self.add_clause(c)

    # ------------------------------------------------------------------ setup

    def add_clause(self, lits: Sequence[int]) -> Clause:
        """Add a normalized original clause (call only at decision level 0)."""
        c = Clause(lits, learnt=False, index=self._clause_counter)
        self._clause_counter += 1
        self.clauses.append(c)
        if len(lits) == 0:
            self.ok = False
        elif len(lits) == 1:
            if not self._enqueue(lits[0], c):
                self.ok = False
        else:
            self.watches[lits[0]].append(c)
            self.watches[lits[1]].append(c)
        return c

    # ------------------------------------------------------ assignment basics

    def _assign_lit(self, lit: int, reason: Optional[Clause]) -> None:
        self.assign[lit] = 1
        self.assign[lit ^ 1] = -1
        v = (lit >> 1) + 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _enqueue(self, lit: int, reason: Optional[Clause]) -> bool:
        val = self.assign[lit]
        if val == 1:
            return True
        if val == -1:
            return False
        self._assign_lit(lit, reason)
        return True

    def _new_level(self) -> None:
        self.trail_lim.append(len(self.trail))

    def _backtrack(self, target_level: int) -> None:
        if len(self.trail_lim) <= target_level:
            return
        split = self.trail_lim[target_level]
        for i in range(len(self.trail) - 1, split - 1, -1):
            lit = self.trail[i]
            v = (lit >> 1) + 1
            self.phase[v] = not (lit & 1)
            self.assign[lit] = 0
            self.assign[lit ^ 1] = 0
            self.reason[v] = None
            self.level[v] = -1
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[split:]
        del self.trail_lim[target_level:]
        self.qhead = len(self.trail)

    # ------------------------------------------------------------ propagation

    def _propagate(self) -> Optional[Clause]:
        """Exhaustive unit propagation; returns the conflicting clause if any."""
        assign = self.assign
        trail = self.trail
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            false_lit = p ^ 1
            watchers = self.watches[false_lit]
            i = j = 0
            n_w = len(watchers)
            while i < n_w:
                c = watchers[i]
                i += 1
                if c.deleted:
                    continue
                if c.detached:
                    watchers[j] = c
                    j += 1
                    continue
                lits = c.lits
                if lits[0] == false_lit:
                    lits[0], lits[1] = lits[1], lits[0]
                first = lits[0]
                if assign[first] == 1:
                    watchers[j] = c
                    j += 1
                    continue
                found = False
                for k in range(2, len(lits)):
                    lk = lits[k]
                    if assign[lk] != -1:
                        lits[1], lits[k] = lk, lits[1]
                        self.watches[lk].append(c)
                        found = True
                        break
                if found:
                    continue
                watchers[j] = c
                j += 1
                if assign[first] == -1:
                    while i < n_w:
                        watchers[j] = watchers[i]
                        j += 1
                        i += 1
                    del watchers[j:]
                    self.qhead = len(trail)
                    return c
                self._assign_lit(first, c)
                self.stats.propagations += 1
            del watchers[j:]
        return None

    # -------------------------------------------------------------- activity

    def _bump_var(self, v: int) -> None:
        a = self.activity[v] + self.var_inc
        self.activity[v] = a
        if a > RESCALE_LIMIT:
            scale = 1e-100
            for u in range(1, self.num_vars + 1):
                self.activity[u] *= scale
            self.var_inc *= scale
            self.heap = [
                (-self.activity[u], u)
                for u in range(1, self.num_vars + 1)
                if self.assign[2 * (u - 1)] == 0
            ]
            heapq.heapify(self.heap)
        else:
            heapq.heappush(self.heap, (-a, v))

    def _bump_clause(self, c: Clause) -> None:
        c.activity += self.cla_inc
        if c.activity > RESCALE_LIMIT:
            for d in self.learned:
                d.activity *= 1e-100
            self.cla_inc *= 1e-100

    # ------------------------------------------------------ conflict analysis

    def _analyze(self, confl: Clause) -> Tuple[List[int], int, int]:
        """1-UIP resolution; returns (learnt lits, backjump level, lbd).

        learnt[0] is the asserting literal; learnt[1] (if present) sits at the
        backjump level so the pair is watchable right away.
        """
        learnt: List[int] = [0]
        seen = [False] * (self.num_vars + 1)
        counter = 0
        p = -1
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        c: Optional[Clause] = confl
        while True:
            assert c is not None
            if c.learnt:
                self._bump_clause(c)
            for q in c.lits if p == -1 else c.lits[1:]:
                v = (q >> 1) + 1
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump_var(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[(self.trail[idx] >> 1) + 1]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            c = self.reason[(p >> 1) + 1]
        learnt[0] = p ^ 1

        if len(learnt) == 1:
            bt = 0
        else:
            mx = 1
            for i in range(2, len(learnt)):
                if self.level[(learnt[i] >> 1) + 1] > self.level[(learnt[mx] >> 1) + 1]:
                    mx = i
            learnt[1], learnt[mx] = learnt[mx], learnt[1]
            bt = self.level[(learnt[1] >> 1) + 1]
        lbd = len({self.level[(q >> 1) + 1] for q in learnt})
        return learnt, bt, lbd

    def _record_learned(self, lits: List[int], lbd: int) -> Clause:
        c = Clause(lits, learnt=True, index=self._clause_counter)
        self._clause_counter += 1
        c.lbd = lbd
        c.activity = self.cla_inc
        self.learned.append(c)
        self.watches[lits[0]].append(c)
        self.watches[lits[1]].append(c)
        if self.drat is not None:
            self.drat.write(" ".join(str(l) for l in self._dimacs(lits)) + " 0\n")
        return c

    def _dimacs(self, lits: Iterable[int]) -> List[int]:
        return [(-((l >> 1) + 1) if l & 1 else (l >> 1) + 1) for l in lits]

    def _locked_clauses(self) -> set:
        locked = set()
        for lit in self.trail:
            r = self.reason[(lit >> 1) + 1]
            if r is not None and r.learnt:
                locked.add(r)
        return locked

    def _maybe_reduce(self) -> None:
        if len(self.learned) <= self.learned_target:
            return
        self.learned_target = adjust_learned_target(
            self.stats, self.learned, self.learned_target
        )
        before = self.learned
        self.learned = reduce_learned(
            self.learned, self.learned_target, self._locked_clauses()
        )
        dropped = [c for c in before if c.deleted]
        self.stats.learned_deleted += len(dropped)
        if self.drat is not None:
            for c in dropped:
                self.drat.write(
                    "d " + " ".join(str(l) for l in self._dimacs(c.lits)) + " 0\n"
                )

    # ----------------------------------------------------------------- decide

    def _pick_branch_var(self) -> Optional[int]:
        heap = self.heap
        act = self.activity
        assign = self.assign
        while heap:
            na, v = heap[0]
            if assign[2 * (v - 1)] != 0 or -na != act[v]:
                heapq.heappop(heap)
                continue
            return v
        return None

    # ------------------------------------------------------------ public API

    def propagate_check(self, assumptions: Iterable[int] = ()) -> PropagationResult:
        """Unit-propagation closure of the formula plus assumptions.

        No decisions, no learning.  Raises ValueError when the assumptions
        contain a complementary pair.
        """
        codes = list(assumptions)
        aset = set(codes)
        for a in codes:
            if a ^ 1 in aset:
                raise ValueError("complementary assumptions")
        if not self.ok:
            return PropagationResult(conflict=True)
        self._backtrack(0)
        if self._propagate() is not None:
            self.ok = False
            return PropagationResult(conflict=True)
        self._new_level()
        conflict = False
        for a in codes:
            if self.assign[a] == -1:
                conflict = True
                break
            if self.assign[a] == 0:
                self._assign_lit(a, None)
        if not conflict:
            conflict = self._propagate() is not None
        literals = frozenset(self.trail) if not conflict else frozenset()
        self._backtrack(0)
        return PropagationResult(conflict=conflict, literals=literals)

    def solve(
        self,
        assumptions: Iterable[int] = (),
        max_conflicts: Optional[int] = None,
    ) -> SolveResult:
        """Complete search under assumptions with an optional conflict budget."""
        codes = list(assumptions)
        aset = set(codes)
        for a in codes:
            if a ^ 1 in aset:
                raise ValueError("complementary assumptions")
        if not self.ok:
            return SolveResult("unsat")
        self._backtrack(0)
        conflicts = 0
        restart_idx = 1
        restart_limit = LUBY_UNIT * luby(restart_idx)
        conflicts_since_restart = 0
        while True:
            confl = self._propagate()
            if confl is not None:
                self.stats.conflicts += 1
                conflicts += 1
                conflicts_since_restart += 1
                if not self.trail_lim:
                    self.ok = False
                    return SolveResult("unsat")
                learnt, bt, lbd = self._analyze(confl)
                self._backtrack(bt)
                if len(learnt) == 1:
                    if not self._enqueue(learnt[0], None):
                        self.ok = False
                        return SolveResult("unsat")
                else:
                    c = self._record_learned(learnt, lbd)
                    self._enqueue(learnt[0], c)
                self.var_inc /= VAR_DECAY
                self.cla_inc /= CLAUSE_DECAY
                if max_conflicts is not None and conflicts >= max_conflicts:
                    self._backtrack(0)
                    return SolveResult("unknown")
                if (
                    conflicts % self.reduce_interval == 0
                    and len(self.learned) > self.learned_target
                ):
                    self._maybe_reduce()
                if conflicts_since_restart >= restart_limit:
                    self.stats.restarts += 1
                    restart_idx += 1
                    restart_limit = LUBY_UNIT * luby(restart_idx)
                    conflicts_since_restart = 0
                    self._backtrack(0)
            else:
                lvl = len(self.trail_lim)
                if lvl < len(codes):
                    a = codes[lvl]
                    if self.assign[a] == -1:
                        self._backtrack(0)
                        return SolveResult("unsat")
                    self._new_level()
                    if self.assign[a] == 0:
                        self._assign_lit(a, None)
                else:
                    v = self._pick_branch_var()
                    if v is None:
                        model = {
                            u: self.assign[2 * (u - 1)] == 1
                            for u in range(1, self.num_vars + 1)
                        }
                        self._backtrack(0)
                        return SolveResult("sat", model)
                    self.stats.decisions += 1
                    self._new_level()
                    lit = 2 * (v - 1) + (0 if self.phase[v] else 1)
                    self._assign_lit(lit, None)


def propagate_units(formula: CnfFormula, assumptions: Iterable[int] = ()) -> PropagationResult:
    """Unit-propagation closure over a formula from scratch."""
    s = Solver(formula.num_vars, formula.clauses)
    return s.propagate_check(assumptions)


def solve(
    formula: CnfFormula,
    assumptions: Iterable[int] = (),
    max_conflicts: Optional[int] = None,
) -> SolveResult:
    """One-shot complete solve of a formula under assumptions."""
    s = Solver(formula.num_vars, formula.clauses)
    return s.solve(assumptions, max_conflicts)
