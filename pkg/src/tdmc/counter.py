"""Search-based exact model counting core.

Counts by branching, unit propagation with clause learning, decomposition of
the residual formula into connected components, and memoization of component
values under 128-bit keyed signatures (probabilistic caching: the component
itself is not stored, only its hash).  With ``m`` cache lookups the union
bound on any collision is m^2 / 2^129; at m = 10^14 that is about 1.5e-11,
below 1e-9, and larger lookup counts are out of reach for one run.

The counter works over a swappable semiring: exact big integers for plain
model counting, arbitrary-precision reals (mpmath, configurable mantissa)
for weighted counting.  Free variables contribute a factor of 2 resp.
w(v) + w(-v).

Two guards keep component caching sound in the presence of global clause
learning:

* propagation never enqueues a literal whose variable lies outside the
  component currently being counted, so every trail extension stays inside
  the component's scope; and
* whenever a component's total evaluates to zero, every cache entry stored
  since that component's node began is evicted (including the zero itself).

A learned clause used inside component K is only guaranteed to be a
consequence of K when the rest of the residual formula is satisfiable; the
failing case implies some other component is unsatisfiable, and the second
guard evicts everything such a component could have corrupted before any
node outside its span can hit it.  Corrupted values are always undercounts,
so a zero stays zero and the final count is exact.
"""

from __future__ import annotations

import math
import sys
import time
from array import array
from dataclasses import dataclass, field
from fractions import Fraction
from hashlib import blake2b
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import mpmath

from .formula import CnfFormula
from .sat import (
    GLUE_LBD,
    Clause,
    adjust_learned_target,
    reduce_learned,
)
from .td import TreeDecomposition, build_primal_graph, validate, variable_depths


class CountTimeout(Exception):
    """Raised when the configured deadline expires mid-search."""


# ------------------------------------------------------------------ semirings


class CountSemiring:
    """Exact nonnegative integer counts."""

    weighted = False
    zero = 0
    one = 1

    def lit_weight(self, lit: int):
        return 1

    def free_factor(self, var: int):
        return 2

    def from_fraction(self, f: Fraction):
        if f.denominator != 1:
            raise ValueError("unweighted multiplier must be an integer")
        return f.numerator


class WeightedSemiring:
    """Arbitrary-precision nonnegative reals (mpmath mpf values).

    Construct and use under ``mpmath.workprec(precision_bits)`` so every
    operation rounds at the configured mantissa width.
    """

    weighted = True

    def __init__(self, formula: CnfFormula, precision_bits: int = 256):
        self.precision_bits = precision_bits
        self.zero = mpmath.mpf(0)
        self.one = mpmath.mpf(1)
        nv = formula.num_vars
        self.lw = [self.one] * (2 * nv)
        self.fv = [self.zero] * (nv + 1)
        for code in range(2 * nv):
            self.lw[code] = self.from_fraction(formula.weight(code))
        for v in range(1, nv + 1):
            self.fv[v] = self.lw[2 * (v - 1)] + self.lw[2 * (v - 1) + 1]

    def lit_weight(self, lit: int):
        return self.lw[lit]

    def free_factor(self, var: int):
        return self.fv[var]

    def from_fraction(self, f: Fraction):
        return mpmath.mpf(f.numerator) / mpmath.mpf(f.denominator)


# ----------------------------------------------------------------- branching


@dataclass
class BranchConfig:
    use_td: bool = True
    C: Optional[float] = None  # filled from branch_constant when use_td
    freq_weight: float = 1.0
    act_weight: float = 1.0


def branch_constant(n: int, w: int) -> float:
    """Depth-penalty constant 100*exp(n/w)/n, saturated at 1e30.

    Small width relative to the variable count makes the decomposition term
    dominate the branching score.  Ratios beyond 690 would overflow the
    exponential, so the constant pins at 1e30 there.
    """
    if n < 1 or w < 1:
        raise ValueError("need n >= 1 and w >= 1")
    if n / w > 690:
        return 1e30
    return 100.0 * math.exp(n / w) / n


def branch_score(
    x: int,
    freq: float,
    act: float,
    depths: Dict[int, float],
    cfg: BranchConfig,
) -> float:
    """freq + act - C*d(x) when TD-guided, else freq + act."""
    s = cfg.freq_weight * freq + cfg.act_weight * act
    if cfg.use_td:
        assert cfg.C is not None and cfg.C > 0
        s -= cfg.C * depths.get(x, 0.0)
    return s


# ---------------------------------------------------------------- components


class Component(NamedTuple):
    """Connected residual sub-formula: sorted vars and (clause, positions) pairs.

    ``clauses`` holds indices into the original clause list together with the
    positions of the still-unassigned literals, so the pair determines the
    residual clause exactly.
    """

    vars: Tuple[int, ...]
    clauses: Tuple[Tuple[int, Tuple[int, ...]], ...]


class ComponentSignature(NamedTuple):
    hi: int
    lo: int


def component_signature(comp: Component, key: bytes) -> ComponentSignature:
    """128-bit keyed hash of the component's canonical encoding."""
    data = array("q")
    data.append(len(comp.vars))
    data.extend(comp.vars)
    data.append(len(comp.clauses))
    for idx, positions in comp.clauses:
        data.append(idx)
        data.append(len(positions))
        data.extend(positions)
    digest = blake2b(data.tobytes(), key=key, digest_size=16).digest()
    return ComponentSignature(
        hi=int.from_bytes(digest[:8], "big"),
        lo=int.from_bytes(digest[8:], "big"),
    )


def component_frequencies(
    comp: Component,
    clause_lits: Sequence[Sequence[int]],
) -> Dict[int, int]:
    """Active-clause occurrence counts for the component's variables."""
    freq: Dict[int, int] = {}
    for idx, positions in comp.clauses:
        lits = clause_lits[idx]
        for p in positions:
            v = (lits[p] >> 1) + 1
            freq[v] = freq.get(v, 0) + 1
    return freq


def derive_hash_key(seed: int) -> bytes:
    """16-byte signature key from the 64-bit run seed."""
    return blake2b(
        seed.to_bytes(8, "big", signed=True), digest_size=16
    ).digest()


# --------------------------------------------------------------------- cache


def _entry_size(value) -> int:
    return sys.getsizeof(value) + 96  # key words + dict slot + bookkeeping


class ComponentCache:
    """Fixed-capacity signature -> value store with score-based eviction.

    Scores are hit counts, halved every ``decay_interval`` stores; eviction
    removes lowest-score (then oldest) entries first and never touches
    pinned signatures (the current recursion path).
    """

    def __init__(self, capacity_bytes: int, decay_interval: int = 100_000):
        self.capacity_bytes = capacity_bytes
        self.decay_interval = decay_interval
        self.entries: Dict[ComponentSignature, list] = {}
        self.store_log: List[ComponentSignature] = []
        self.used_bytes = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.stores = 0

    def get(self, sig: ComponentSignature):
        e = self.entries.get(sig)
        if e is None:
            self.misses += 1
            return None
        e[1] += 1
        self.hits += 1
        return e[0]

    def put(self, sig: ComponentSignature, value, pinned=frozenset()) -> None:
        old = self.entries.get(sig)
        if old is not None:
            self.used_bytes -= old[2]
        size = _entry_size(value)
        self.entries[sig] = [value, 1, size]
        self.used_bytes += size
        self.store_log.append(sig)
        self.stores += 1
        if self.stores % self.decay_interval == 0:
            for e in self.entries.values():
                e[1] /= 2
        if self.used_bytes > self.capacity_bytes:
            self._evict(pinned)

    def mark(self) -> int:
        return len(self.store_log)

    def purge_since(self, mark: int) -> None:
        for sig in self.store_log[mark:]:
            e = self.entries.pop(sig, None)
            if e is not None:
                self.used_bytes -= e[2]
        del self.store_log[mark:]

    def _evict(self, pinned) -> None:
        target = self.capacity_bytes
        ranked = sorted(
            (e[1], age, sig)
            for age, (sig, e) in enumerate(self.entries.items())
            if sig not in pinned
        )
        for _score, _age, sig in ranked:
            if self.used_bytes <= target:
                break
            e = self.entries.pop(sig)
            self.used_bytes -= e[2]
            self.evictions += 1


# ------------------------------------------------------------- configuration


@dataclass
class CounterConfig:
    branching: BranchConfig = field(default_factory=BranchConfig)
    cache_bytes: int = 2000 * 1024 * 1024
    precision_bits: int = 256
    seed: int = 0
    implicit_bcp: bool = False  # reserved; activation is rejected
    debug_nodes: bool = False
    deadline: Optional[float] = None  # time.monotonic() deadline
    learned_target: int = 10_000
    reduce_interval: int = 2_048


@dataclass
class CountStats:
    decisions: int = 0
    conflicts: int = 0
    cache_hits: int = 0
    cache_stores: int = 0
    components: int = 0
    max_depth: int = 0


@dataclass
class CountResult:
    value: object
    status: str  # "sat" | "unsat"
    stats: CountStats
    node_log: Optional[List[Tuple[int, object, object, object]]] = None


# ------------------------------------------------------------------- counter


class _Engine:
    """One counting run; single-threaded, deterministic for a fixed seed."""

    def __init__(self, formula: CnfFormula, semiring, depths, cfg: CounterConfig):
        nv = formula.num_vars
        self.nv = nv
        self.semiring = semiring
        self.weighted = semiring.weighted
        self.cfg = cfg
        self.depths = depths or {}
        bcfg = cfg.branching
        self.use_td = bcfg.use_td
        self.C = bcfg.C if bcfg.C is not None else 0.0
        self.freq_w = bcfg.freq_weight
        self.act_w = bcfg.act_weight

        self.clause_lits: List[Tuple[int, ...]] = [tuple(c) for c in formula.clauses]
        self.assign = [0] * (2 * nv)
        self.level = [-1] * (nv + 1)
        self.reason: List[Optional[Clause]] = [None] * (nv + 1)
        self.trail: List[int] = []
        self.trail_lim: List[int] = []
        self.qhead = 0
        self.watches: List[List[Clause]] = [[] for _ in range(2 * nv)]
        self.activity = [0.0] * (nv + 1)
        self.var_inc = 1.0
        self.cla_inc = 1.0
        self.learned: List[Clause] = []
        self.learned_target = cfg.learned_target
        self._clause_counter = 0
        self.scope_stamp = [0] * (nv + 1)
        self._node_counter = 0
        self.cache = ComponentCache(cfg.cache_bytes)
        self.key = derive_hash_key(cfg.seed)
        self.stats = CountStats()
        self.path: Set[ComponentSignature] = set()
        self.node_log: Optional[List] = [] if cfg.debug_nodes else None
        self.ok = True

        for idx, lits in enumerate(self.clause_lits):
            if len(lits) == 0:
                self.ok = False
            elif len(lits) == 1:
                if not self._enqueue(lits[0], None):
                    self.ok = False
            else:
                c = Clause(lits, learnt=False, index=idx)
                self.watches[lits[0]].append(c)
                self.watches[lits[1]].append(c)

    # --------------------------------------------------------- trail basics

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

    def _backtrack_one(self) -> None:
        split = self.trail_lim.pop()
        for i in range(len(self.trail) - 1, split - 1, -1):
            lit = self.trail[i]
            v = (lit >> 1) + 1
            self.assign[lit] = 0
            self.assign[lit ^ 1] = 0
            self.reason[v] = None
            self.level[v] = -1
        del self.trail[split:]
        self.qhead = len(self.trail)

    # ---------------------------------------------------------- propagation

    def _propagate(self, scope_id: int) -> Optional[Clause]:
        """BCP restricted to the current component scope.

        Implications on variables stamped below ``scope_id`` are skipped (the
        clause keeps its watches); conflicts are always reported.
        """
        assign = self.assign
        trail = self.trail
        stamp = self.scope_stamp
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
                if stamp[(first >> 1) + 1] >= scope_id:
                    self._assign_lit(first, c)
                # out-of-scope implication: leave the variable untouched
            del watchers[j:]
        return None

    # ---------------------------------------------------- conflict analysis

    def _bump_var(self, v: int) -> None:
        a = self.activity[v] + self.var_inc
        self.activity[v] = a
        if a > 1e100:
            for u in range(1, self.nv + 1):
                self.activity[u] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, confl: Clause) -> Tuple[List[int], int]:
        """1-UIP resolution; returns (learnt literals, lbd)."""
        learnt: List[int] = [0]
        seen = [False] * (self.nv + 1)
        counter = 0
        p = -1
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        c: Optional[Clause] = confl
        while True:
            assert c is not None
            if c.learnt:
                c.activity += self.cla_inc
                if c.activity > 1e100:
                    for d in self.learned:
                        d.activity *= 1e-100
                    self.cla_inc *= 1e-100
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
        if len(learnt) > 1:
            mx = 1
            for i in range(2, len(learnt)):
                if self.level[(learnt[i] >> 1) + 1] > self.level[(learnt[mx] >> 1) + 1]:
                    mx = i
            learnt[1], learnt[mx] = learnt[mx], learnt[1]
        lbd = len({self.level[(q >> 1) + 1] for q in learnt})
        return learnt, lbd

    def _on_conflict(self, confl: Clause) -> None:
        self.stats.conflicts += 1
        learnt, lbd = self._analyze(confl)
        self.var_inc /= 0.95
        self.cla_inc /= 0.999
        if len(learnt) >= 2:
            c = Clause(learnt, learnt=True, index=self._clause_counter)
            self._clause_counter += 1
            c.lbd = lbd
            c.activity = self.cla_inc
            self.learned.append(c)
            self.watches[learnt[0]].append(c)
            self.watches[learnt[1]].append(c)
        # unit learned clauses are dropped: they cannot be watched and the
        # branch that produced them returns zero regardless
        if (
            self.stats.conflicts % self.cfg.reduce_interval == 0
            and len(self.learned) > self.learned_target
        ):
            self.learned_target = adjust_learned_target(
                None, self.learned, self.learned_target
            )
            locked = set()
            for lit in self.trail:
                r = self.reason[(lit >> 1) + 1]
                if r is not None and r.learnt:
                    locked.add(r)
            self.learned = reduce_learned(self.learned, self.learned_target, locked)

    # ------------------------------------------------------------ splitting

    def _split(
        self,
        parent_vars: Sequence[int],
        parent_entries: Sequence[Tuple[int, Tuple[int, ...]]],
    ) -> Tuple[List[Component], List[int]]:
        """Partition the residual into connected components plus free vars."""
        assign = self.assign
        clause_lits = self.clause_lits
        active: List[Tuple[int, Tuple[int, ...]]] = []
        var_entries: Dict[int, List[int]] = {}
        for idx, positions in parent_entries:
            lits = clause_lits[idx]
            satisfied = False
            for p in positions:
                if assign[lits[p]] == 1:
                    satisfied = True
                    break
            if satisfied:
                continue
            nposs = tuple(p for p in positions if assign[lits[p]] == 0)
            eid = len(active)
            active.append((idx, nposs))
            for p in nposs:
                v = (lits[p] >> 1) + 1
                var_entries.setdefault(v, []).append(eid)

        comps: List[Component] = []
        frees: List[int] = []
        visited: Set[int] = set()
        for v in parent_vars:
            if assign[2 * (v - 1)] != 0 or v in visited:
                continue
            if v not in var_entries:
                frees.append(v)
                continue
            comp_vars = []
            comp_eids: Set[int] = set()
            stack = [v]
            visited.add(v)
            while stack:
                u = stack.pop()
                comp_vars.append(u)
                for eid in var_entries[u]:
                    if eid in comp_eids:
                        continue
                    comp_eids.add(eid)
                    idx, nposs = active[eid]
                    lits = clause_lits[idx]
                    for p in nposs:
                        w = (lits[p] >> 1) + 1
                        if w not in visited:
                            visited.add(w)
                            stack.append(w)
            comps.append(
                Component(
                    vars=tuple(sorted(comp_vars)),
                    clauses=tuple(sorted(active[e] for e in comp_eids)),
                )
            )
        comps.sort(key=lambda c: c.vars[0])
        return comps, frees

    # ------------------------------------------------------------ branching

    def _pick_var(self, comp: Component) -> int:
        freq = component_frequencies(comp, self.clause_lits)
        amax = 0.0
        activity = self.activity
        for v in comp.vars:
            if activity[v] > amax:
                amax = activity[v]
        best_v = comp.vars[0]
        best_s = -math.inf
        use_td = self.use_td
        depths = self.depths
        for v in comp.vars:
            act = activity[v] / amax if amax > 0.0 else 0.0
            s = self.freq_w * freq.get(v, 0) + self.act_w * act
            if use_td:
                s -= self.C * depths.get(v, 0.0)
            if s > best_s:
                best_s = s
                best_v = v
        return best_v

    # ------------------------------------------------------------- recursion

    def _count_component(self, comp: Component):
        self.stats.components += 1
        sig = component_signature(comp, self.key)
        cached = self.cache.get(sig)
        if cached is not None:
            return cached
        self._node_counter += 1
        node_id = self._node_counter
        stamp = self.scope_stamp
        for v in comp.vars:
            stamp[v] = node_id
        x = self._pick_var(comp)
        self.path.add(sig)
        lit = 2 * (x - 1)
        v_pos = self._count_branch(comp, lit, node_id)
        v_neg = self._count_branch(comp, lit ^ 1, node_id)
        total = v_pos + v_neg
        self.path.discard(sig)
        self.cache.put(sig, total, self.path)
        if self.node_log is not None:
            self.node_log.append((x, v_pos, v_neg, total))
        return total

    def _count_branch(self, comp: Component, lit: int, scope_id: int):
        self.stats.decisions += 1
        if self.cfg.deadline is not None and self.stats.decisions % 1024 == 0:
            if time.monotonic() > self.cfg.deadline:
                raise CountTimeout()
        self.trail_lim.append(len(self.trail))
        depth = len(self.trail_lim)
        if depth > self.stats.max_depth:
            self.stats.max_depth = depth
        base = len(self.trail)
        self._assign_lit(lit, None)
        confl = self._propagate(scope_id)
        if confl is not None:
            self._on_conflict(confl)
            self._backtrack_one()
            return self.semiring.zero

        comps, frees = self._split(comp.vars, comp.clauses)
        if self.weighted:
            value = self.semiring.one
            lw = self.semiring.lw
            for t in self.trail[base:]:
                value = value * lw[t]
            for v in frees:
                value = value * self.semiring.fv[v]
        else:
            value = 1 << len(frees)
        mark = self.cache.mark()
        for sub in comps:
            sv = self._count_component(sub)
            if sv == 0:
                self.cache.purge_since(mark)
                value = self.semiring.zero
                break
            value = value * sv
        self._backtrack_one()
        return value

    # ------------------------------------------------------------ entry point

    def run(self) -> CountResult:
        zero = self.semiring.zero
        if not self.ok:
            return self._result(zero)
        confl = self._propagate(0)
        if confl is not None:
            return self._result(zero)

        if self.weighted:
            value = self.semiring.one
            lw = self.semiring.lw
            for t in self.trail:
                value = value * lw[t]
        else:
            value = 1
        all_vars = range(1, self.nv + 1)
        initial_entries = [
            (i, tuple(range(len(lits))))
            for i, lits in enumerate(self.clause_lits)
        ]
        comps, frees = self._split(all_vars, initial_entries)
        if self.weighted:
            for v in frees:
                value = value * self.semiring.fv[v]
        else:
            value = value << len(frees)
        mark = self.cache.mark()
        for sub in comps:
            sv = self._count_component(sub)
            if sv == 0:
                self.cache.purge_since(mark)
                value = zero
                break
            value = value * sv
        return self._result(value)

    def _result(self, value) -> CountResult:
        self.stats.cache_hits = self.cache.hits
        self.stats.cache_stores = self.cache.stores
        status = "unsat" if value == 0 else "sat"
        return CountResult(
            value=value, status=status, stats=self.stats, node_log=self.node_log
        )


def count(
    formula: CnfFormula,
    td: Optional[TreeDecomposition] = None,
    config: Optional[CounterConfig] = None,
) -> CountResult:
    """Exact (weighted) model count over all declared variables.

    With TD-guided branching enabled (the default) a valid rooted
    decomposition of the formula's primal graph must be supplied; it is
    validated before the search starts and only influences the branching
    order, never the count.
    """
    cfg = config or CounterConfig()
    if cfg.implicit_bcp:
        raise ValueError("implicit BCP is unsupported")
    bcfg = cfg.branching
    depths: Optional[Dict[int, float]] = None
    if bcfg.use_td and formula.num_vars > 0:
        if td is None:
            raise ValueError("TD-guided branching requires a tree decomposition")
        graph = build_primal_graph(formula)
        validate(td, graph)
        if td.root is None:
            raise ValueError("tree decomposition must be rooted")
        depths = variable_depths(td)
        if bcfg.C is None:
            bcfg = BranchConfig(
                use_td=True,
                C=branch_constant(formula.num_vars, max(1, td.width)),
                freq_weight=bcfg.freq_weight,
                act_weight=bcfg.act_weight,
            )
            cfg = CounterConfig(
                branching=bcfg,
                cache_bytes=cfg.cache_bytes,
                precision_bits=cfg.precision_bits,
                seed=cfg.seed,
                implicit_bcp=cfg.implicit_bcp,
                debug_nodes=cfg.debug_nodes,
                deadline=cfg.deadline,
                learned_target=cfg.learned_target,
                reduce_interval=cfg.reduce_interval,
            )
    old_limit = sys.getrecursionlimit()
    want = 10_000 + 8 * formula.num_vars
    if want > old_limit:
        sys.setrecursionlimit(want)
    try:
        if formula.is_weighted:
            with mpmath.workprec(cfg.precision_bits):
                semiring = WeightedSemiring(formula, cfg.precision_bits)
                return _Engine(formula, semiring, depths, cfg).run()
        return _Engine(formula, CountSemiring(), depths, cfg).run()
    finally:
        if want > old_limit:
            sys.setrecursionlimit(old_limit)
