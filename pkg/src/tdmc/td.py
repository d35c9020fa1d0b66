"""Primal graphs and rooted tree decompositions for the branching heuristic.

Decompositions come from greedy elimination orders (min-degree and min-fill,
then randomized tie-broken restarts) under an anytime budget; the best width
found wins.  The PACE 2017 .gr/.td exchange formats are supported so an
external decomposer can be plugged in.  Roots are chosen so the root bag is
a balanced separator, and every variable gets a depth score in [0, 1]: the
normalized tree distance from the root to the nearest bag containing it.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .formula import CnfFormula


class TdError(ValueError):
    """Format or validation failure for a tree decomposition."""


@dataclass
class PrimalGraph:
    """Undirected simple graph over vertices 1..vertex_count."""

    vertex_count: int
    adj: List[Tuple[int, ...]]  # index 0 unused; sorted neighbor tuples

    def edges(self) -> Set[Tuple[int, int]]:
        out = set()
        for u in range(1, self.vertex_count + 1):
            for v in self.adj[u]:
                if u < v:
                    out.add((u, v))
        return out

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "PrimalGraph":
        sets: List[Set[int]] = [set() for _ in range(n + 1)]
        for u, v in edges:
            if u == v:
                continue
            sets[u].add(v)
            sets[v].add(u)
        return cls(n, [tuple()] + [tuple(sorted(sets[v])) for v in range(1, n + 1)])


def build_primal_graph(formula: CnfFormula) -> PrimalGraph:
    """Vertices are variables; edges join variables sharing a clause."""
    n = formula.num_vars
    sets: List[Set[int]] = [set() for _ in range(n + 1)]
    for c in formula.clauses:
        vs = [(l >> 1) + 1 for l in c]
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                if vs[i] != vs[j]:
                    sets[vs[i]].add(vs[j])
                    sets[vs[j]].add(vs[i])
    return PrimalGraph(n, [tuple()] + [tuple(sorted(sets[v])) for v in range(1, n + 1)])


@dataclass
class TreeDecomposition:
    bags: List[FrozenSet[int]]
    tree_edges: List[Tuple[int, int]]  # 0-based bag indices
    root: Optional[int] = None

    @property
    def width(self) -> int:
        return max((len(b) for b in self.bags), default=1) - 1


def validate(td: TreeDecomposition, graph: PrimalGraph) -> None:
    """Check the four decomposition invariants; raise TdError naming the first violated."""
    nb = len(td.bags)
    if nb == 0:
        raise TdError("tree shape: decomposition has no bags")
    adj: List[List[int]] = [[] for _ in range(nb)]
    seen_edges = set()
    for a, b in td.tree_edges:
        if not (0 <= a < nb and 0 <= b < nb) or a == b or (a, b) in seen_edges or (b, a) in seen_edges:
            raise TdError("tree shape: bad tree edge")
        seen_edges.add((a, b))
        adj[a].append(b)
        adj[b].append(a)
    if len(td.tree_edges) != nb - 1:
        raise TdError("tree shape: edge count is not bags-1")
    # connectivity of the whole tree
    stack = [0]
    reached = {0}
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in reached:
                reached.add(y)
                stack.append(y)
    if len(reached) != nb:
        raise TdError("tree shape: tree is disconnected")

    where: List[List[int]] = [[] for _ in range(graph.vertex_count + 1)]
    for i, bag in enumerate(td.bags):
        for v in bag:
            if not (1 <= v <= graph.vertex_count):
                raise TdError(f"vertex coverage: bag contains unknown vertex {v}")
            where[v].append(i)
    for v in range(1, graph.vertex_count + 1):
        if not where[v]:
            raise TdError(f"vertex coverage: vertex {v} is in no bag")
    for u in range(1, graph.vertex_count + 1):
        for v in graph.adj[u]:
            if u < v and not any(v in td.bags[i] for i in where[u]):
                raise TdError(f"edge coverage: edge ({u},{v}) is in no bag")
    for v in range(1, graph.vertex_count + 1):
        nodes = set(where[v])
        start = where[v][0]
        stack = [start]
        comp = {start}
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y in nodes and y not in comp:
                    comp.add(y)
                    stack.append(y)
        if comp != nodes:
            raise TdError(f"connectedness: bags containing {v} are not a subtree")


def _td_from_order(adj_sets: List[Set[int]], order: List[int]) -> TreeDecomposition:
    """Decomposition from an elimination order (bags {v} + neighbors at elimination)."""
    n = len(order)
    pos = {v: i for i, v in enumerate(order)}
    work = [set(s) for s in adj_sets]
    bags: List[FrozenSet[int]] = []
    nbrs_at_elim: List[Set[int]] = []
    for v in order:
        nv = work[v]
        bags.append(frozenset(nv | {v}))
        nbrs_at_elim.append(set(nv))
        lst = list(nv)
        for i in range(len(lst)):
            wi = work[lst[i]]
            wi.discard(v)
            for j in range(i + 1, len(lst)):
                wi.add(lst[j])
                work[lst[j]].add(lst[i])
    edges: List[Tuple[int, int]] = []
    for i in range(n):
        nbrs = nbrs_at_elim[i]
        if nbrs:
            parent = min(nbrs, key=lambda u: pos[u])
            edges.append((i, pos[parent]))
        elif i + 1 < n:
            edges.append((i, i + 1))
    if n == 0:
        return TreeDecomposition(bags=[frozenset()], tree_edges=[])
    return TreeDecomposition(bags=bags, tree_edges=edges)


def _eliminate(work: List[Set[int]], v: int) -> List[int]:
    """Remove v, make its neighborhood a clique; returns the old neighbors."""
    ns = list(work[v])
    for u in ns:
        work[u].discard(v)
    for i in range(len(ns)):
        wi = work[ns[i]]
        for j in range(i + 1, len(ns)):
            wi.add(ns[j])
            work[ns[j]].add(ns[i])
    work[v] = set()
    return ns


def _min_fill_order(
    adj_sets: List[Set[int]],
    vertices: List[int],
    rng: Optional[random.Random],
) -> List[int]:
    """Min-fill elimination order by rescan; only used on small graphs."""
    work = [set(s) for s in adj_sets]
    remaining = set(vertices)
    order: List[int] = []

    def fill_count(v: int) -> int:
        ns = list(work[v])
        cnt = 0
        for i in range(len(ns)):
            wi = work[ns[i]]
            for j in range(i + 1, len(ns)):
                if ns[j] not in wi:
                    cnt += 1
        return cnt

    while remaining:
        best_key = None
        cands: List[int] = []
        for v in sorted(remaining):
            key = fill_count(v)
            if best_key is None or key < best_key:
                best_key = key
                cands = [v]
            elif key == best_key:
                cands.append(v)
        v = cands[0] if rng is None else cands[rng.randrange(len(cands))]
        order.append(v)
        _eliminate(work, v)
        remaining.discard(v)
    return order


def _min_degree_order(
    adj_sets: List[Set[int]],
    vertices: List[int],
    rng: Optional[random.Random],
) -> List[int]:
    """Heap-based min-degree elimination order; scales to large sparse graphs."""
    work = [set(s) for s in adj_sets]
    heap: List[Tuple[int, float, int]] = []

    def push(v: int) -> None:
        tie = rng.random() if rng is not None else 0.0
        heapq.heappush(heap, (len(work[v]), tie, v))

    eliminated = [False] * len(work)
    for v in vertices:
        push(v)
    order: List[int] = []
    while len(order) < len(vertices):
        d, _, v = heapq.heappop(heap)
        if eliminated[v] or d != len(work[v]):
            continue
        eliminated[v] = True
        order.append(v)
        for u in _eliminate(work, v):
            push(u)
    return order


ITERS_PER_SECOND = 16
MIN_FILL_MAX_VERTICES = 4096


def compute_td(
    graph: PrimalGraph,
    time_budget: float,
    seed: int = 0,
    iterations: Optional[int] = None,
) -> TreeDecomposition:
    """Anytime greedy decomposition: best width within the budget wins.

    The iteration count is derived deterministically from the budget (so a
    fixed seed reproduces the result bit-for-bit); a wall-clock check between
    iterations aborts early on oversized inputs.  Iteration 0 is deterministic
    min-degree, iteration 1 deterministic min-fill, the rest are randomized
    tie-broken variants with per-iteration RNGs derived from (seed, i), which
    makes the best width non-increasing in the budget.
    """
    if time_budget <= 0:
        raise ValueError("time budget must be positive")
    n = graph.vertex_count
    if n == 0:
        return TreeDecomposition(bags=[frozenset()], tree_edges=[], root=0)
    adj_sets = [set(graph.adj[v]) if v else set() for v in range(n + 1)]
    vertices = list(range(1, n + 1))
    if iterations is None:
        iterations = max(2, int(time_budget * ITERS_PER_SECOND))
    small = n <= MIN_FILL_MAX_VERTICES
    deadline = time.monotonic() + time_budget
    best: Optional[TreeDecomposition] = None
    for i in range(iterations):
        if i >= 1 and best is not None and time.monotonic() > deadline:
            break
        if i == 0:
            order = _min_degree_order(adj_sets, vertices, None)
        elif i == 1:
            order = (
                _min_fill_order(adj_sets, vertices, None)
                if small
                else _min_degree_order(adj_sets, vertices, random.Random(seed << 20))
            )
        else:
            rng = random.Random((seed << 20) ^ i)
            if small and i % 2 == 0:
                order = _min_fill_order(adj_sets, vertices, rng)
            else:
                order = _min_degree_order(adj_sets, vertices, rng)
        td = _td_from_order(adj_sets, order)
        if best is None or td.width < best.width:
            best = td
    assert best is not None
    return best


_ROOT_WORK_LIMIT = 40_000_000


def select_root(td: TreeDecomposition, graph: PrimalGraph) -> int:
    """Node whose bag is the most balanced separator of the graph.

    Minimizes the largest connected component of graph minus the bag; ties
    broken by smaller bag, then lower node index.  Components disjoint from a
    bag keep their precomputed size, so only the touched components are
    re-explored per candidate; a deterministic work cap bounds the scan on
    very large inputs (later candidates are then skipped).
    """
    n = graph.vertex_count
    comp_id = [0] * (n + 1)
    comp_vertices: List[List[int]] = [[]]  # index 0 unused
    for s in range(1, n + 1):
        if comp_id[s]:
            continue
        cid = len(comp_vertices)
        verts = [s]
        comp_id[s] = cid
        stack = [s]
        while stack:
            x = stack.pop()
            for y in graph.adj[x]:
                if not comp_id[y]:
                    comp_id[y] = cid
                    verts.append(y)
                    stack.append(y)
        comp_vertices.append(verts)
    by_size = sorted(
        range(1, len(comp_vertices)),
        key=lambda cid: (-len(comp_vertices[cid]), cid),
    )

    seen = [0] * (n + 1)
    stamp = 0
    best = None
    work = 0
    for i, bag in enumerate(td.bags):
        if best is not None and work > _ROOT_WORK_LIMIT:
            break
        touched = {comp_id[v] for v in bag if 1 <= v <= n}
        largest = 0
        for cid in by_size:
            if cid not in touched:
                largest = len(comp_vertices[cid])
                break
        stamp += 1
        for cid in touched:
            verts = comp_vertices[cid]
            work += len(verts)
            for s in verts:
                if s in bag or seen[s] == stamp:
                    continue
                size = 0
                seen[s] = stamp
                stack = [s]
                while stack:
                    x = stack.pop()
                    size += 1
                    for y in graph.adj[x]:
                        if y not in bag and seen[y] != stamp:
                            seen[y] = stamp
                            stack.append(y)
                if size > largest:
                    largest = size
        key = (largest, len(bag), i)
        if best is None or key < best:
            best = key
    assert best is not None
    return best[2]


def variable_depths(td: TreeDecomposition) -> Dict[int, float]:
    """Depth score per variable: normalized root distance to the nearest bag.

    All scores are in [0, 1]; root-bag variables score 0.  A decomposition of
    a single bag maps everything to 0.
    """
    if td.root is None:
        raise ValueError("decomposition is not rooted")
    nb = len(td.bags)
    adj: List[List[int]] = [[] for _ in range(nb)]
    for a, b in td.tree_edges:
        adj[a].append(b)
        adj[b].append(a)
    depth = [-1] * nb
    depth[td.root] = 0
    queue = [td.root]
    qi = 0
    while qi < len(queue):
        x = queue[qi]
        qi += 1
        for y in adj[x]:
            if depth[y] < 0:
                depth[y] = depth[x] + 1
                queue.append(y)
    raw: Dict[int, int] = {}
    for i, bag in enumerate(td.bags):
        for v in bag:
            if v not in raw or depth[i] < raw[v]:
                raw[v] = depth[i]
    max_depth = max(raw.values(), default=0)
    if max_depth == 0:
        return {v: 0.0 for v in raw}
    return {v: d / max_depth for v, d in raw.items()}


def parse_pace(text, graph: PrimalGraph) -> TreeDecomposition:
    """Parse a PACE 2017 .td stream and validate it against the graph."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    header = None
    bags: Dict[int, FrozenSet[int]] = {}
    edges: List[Tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens or tokens[0] == "c":
            continue
        if tokens[0] == "s":
            if header is not None or len(tokens) != 5 or tokens[1] != "td":
                raise TdError(f"line {lineno}: malformed solution line")
            try:
                header = (int(tokens[2]), int(tokens[3]), int(tokens[4]))
            except ValueError as exc:
                raise TdError(f"line {lineno}: malformed solution line") from exc
            continue
        if tokens[0] == "b":
            if header is None:
                raise TdError(f"line {lineno}: bag before solution line")
            try:
                bid = int(tokens[1])
                verts = [int(t) for t in tokens[2:]]
            except (ValueError, IndexError) as exc:
                raise TdError(f"line {lineno}: malformed bag line") from exc
            if bid < 1 or bid > header[0]:
                raise TdError(f"line {lineno}: bag id {bid} out of range (ids are 1-based)")
            if bid in bags:
                raise TdError(f"line {lineno}: duplicate bag id {bid}")
            bags[bid] = frozenset(verts)
            continue
        if header is None:
            raise TdError(f"line {lineno}: edge before solution line")
        try:
            a, b = (int(t) for t in tokens)
        except ValueError as exc:
            raise TdError(f"line {lineno}: malformed tree edge") from exc
        if not (1 <= a <= header[0] and 1 <= b <= header[0]):
            raise TdError(f"line {lineno}: tree edge endpoint out of range")
        edges.append((a - 1, b - 1))
    if header is None:
        raise TdError("missing 's td' solution line")
    num_bags, max_bag, num_vertices = header
    if num_vertices != graph.vertex_count:
        raise TdError(
            f"vertex count mismatch: decomposition has {num_vertices}, "
            f"graph has {graph.vertex_count}"
        )
    bag_list: List[FrozenSet[int]] = []
    for bid in range(1, num_bags + 1):
        bag_list.append(bags.get(bid, frozenset()))
    for bag in bag_list:
        if len(bag) > max_bag:
            raise TdError("bag larger than declared maximum size")
    td = TreeDecomposition(bags=bag_list, tree_edges=edges)
    validate(td, graph)
    return td


def write_gr(graph: PrimalGraph) -> str:
    """PACE 2017 .gr form of the graph."""
    edges = sorted(graph.edges())
    lines = [f"p tw {graph.vertex_count} {len(edges)}"]
    for u, v in edges:
        lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


def write_td(td: TreeDecomposition, vertex_count: int) -> str:
    """PACE 2017 .td form of the decomposition."""
    max_bag = max((len(b) for b in td.bags), default=0)
    lines = [f"s td {len(td.bags)} {max_bag} {vertex_count}"]
    for i, bag in enumerate(td.bags, start=1):
        lines.append("b " + " ".join([str(i)] + [str(v) for v in sorted(bag)]))
    for a, b in td.tree_edges:
        lines.append(f"{a + 1} {b + 1}")
    return "\n".join(lines) + "\n"
