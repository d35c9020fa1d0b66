"""Shared test utilities: random instance generators and small oracles."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from tdmc.formula import CnfFormula
from tdmc.td import PrimalGraph


def random_clauses(rng: random.Random, n: int, m: int, k: int = 3) -> List[List[int]]:
    clauses = []
    for _ in range(m):
        width = rng.randint(1, k)
        vs = rng.sample(range(1, n + 1), min(width, n))
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return clauses


def random_formula(
    rng: random.Random, n: int, m: int, k: int = 3, weighted: bool = False
) -> CnfFormula:
    weights: Optional[Dict[int, Fraction]] = None
    if weighted:
        weights = {}
        for v in range(1, n + 1):
            weights[v] = Fraction(rng.randint(1, 999), 1000)
            weights[-v] = Fraction(rng.randint(1, 999), 1000)
    return CnfFormula.from_dimacs(n, random_clauses(rng, n, m, k), weights)


def random_3cnf(rng: random.Random, n: int, density: float) -> CnfFormula:
    m = max(1, round(density * n))
    clauses = []
    for _ in range(m):
        vs = rng.sample(range(1, n + 1), min(3, n))
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return CnfFormula.from_dimacs(n, clauses)


def random_graph(rng: random.Random, n: int, p: float) -> PrimalGraph:
    edges = []
    for u in range(1, n + 1):
        for v in range(u + 1, n + 1):
            if rng.random() < p:
                edges.append((u, v))
    return PrimalGraph.from_edges(n, edges)


def model_satisfies(formula: CnfFormula, model: Dict[int, bool]) -> bool:
    for clause in formula.clauses:
        ok = False
        for code in clause:
            v = (code >> 1) + 1
            val = model[v]
            if (code & 1) == 0 and val or (code & 1) == 1 and not val:
                ok = True
                break
        if not ok:
            return False
    return True


def exact_treewidth(graph: PrimalGraph) -> int:
    """Memoized search over elimination orders (prefix-subset DP on bitmasks)."""
    n = graph.vertex_count
    if n == 0:
        return -1
    adj = [0] * n
    for u in range(1, n + 1):
        for v in graph.adj[u]:
            adj[u - 1] |= 1 << (v - 1)

    def elim_degree(done: int, v: int) -> int:
        # neighbors of v outside done, reached directly or through done
        visited = (1 << v) | done
        frontier = adj[v]
        out = 0
        while frontier:
            new = frontier & ~visited
            if not new:
                break
            visited |= new
            out |= new & ~done
            nxt = 0
            through = new & done
            while through:
                b = through & -through
                nxt |= adj[b.bit_length() - 1]
                through ^= b
            frontier = nxt
        return bin(out & ~(1 << v)).count("1")

    memo: Dict[int, int] = {0: -1}

    def tw(done: int) -> int:
        got = memo.get(done)
        if got is not None:
            return got
        best = n
        rest = done
        while rest:
            b = rest & -rest
            rest ^= b
            v = b.bit_length() - 1
            prev = done ^ b
            cand = max(tw(prev), elim_degree(prev, v))
            if cand < best:
                best = cand
        memo[done] = best
        return best

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10_000))
    try:
        return tw((1 << n) - 1)
    finally:
        sys.setrecursionlimit(old)


def grid_graph(rows: int, cols: int) -> PrimalGraph:
    def vid(r: int, c: int) -> int:
        return r * cols + c + 1

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((vid(r, c), vid(r, c + 1)))
            if r + 1 < rows:
                edges.append((vid(r, c), vid(r + 1, c)))
    return PrimalGraph.from_edges(rows * cols, edges)


def cycle_graph(n: int) -> PrimalGraph:
    return PrimalGraph.from_edges(n, [(i, i % n + 1) for i in range(1, n + 1)])


def complete_graph(n: int) -> PrimalGraph:
    return PrimalGraph.from_edges(
        n, [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)]
    )


def random_tree(rng: random.Random, n: int) -> PrimalGraph:
    edges = [(rng.randint(1, v - 1), v) for v in range(2, n + 1)]
    return PrimalGraph.from_edges(n, edges)


def parse_result_block(stdout: str) -> Dict[str, str]:
    """Reference parser for the CLI result block (kept deliberately short)."""
    out: Dict[str, str] = {}
    for line in stdout.splitlines():
        if line.startswith("c s type "):
            out["type"] = line[len("c s type "):]
        elif line in ("s SATISFIABLE", "s UNSATISFIABLE", "s UNKNOWN"):
            out["status"] = line[2:]
        elif line.startswith("c s log10-estimate "):
            out["log10"] = line[len("c s log10-estimate "):]
        elif line.startswith("c s exact arb int "):
            out["exact"] = line[len("c s exact arb int "):]
        elif line.startswith("c s exact arb float "):
            out["exact"] = line[len("c s exact arb float "):]
    return out
