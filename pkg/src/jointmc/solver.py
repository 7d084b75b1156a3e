"""Heuristic and exact minimizers of the multicut objective.

``solve`` runs Kernighan-Lin style two-component passes from a greedy
additive contraction start and from the all-joined start.
``solve_exact`` enumerates every set partition and is meant as a
reference on small instances only.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .graph import Decomposition, JointGraph, canonicalize, objective

MAX_EXACT_NODES = 12


@dataclass(frozen=True)
class SolveParams:
    max_outer_rounds: int = 100
    gain_epsilon: float = 0.0
    enable_merge_moves: bool = True
    # end a pass after this many moves without a new best prefix; None runs it to the end
    max_stall_moves: int | None = 50

    def __post_init__(self):
        if self.max_outer_rounds < 1:
            raise ValueError("max_outer_rounds must be positive")
        if not self.gain_epsilon >= 0:
            raise ValueError("gain_epsilon must be non-negative")
        if self.max_stall_moves is not None and self.max_stall_moves < 1:
            raise ValueError("max_stall_moves must be positive or None")


@dataclass(frozen=True)
class SolveReport:
    objective: float
    rounds: int
    moves: int
    initial_objective: float

    def line(self) -> str:
        return f"objective={self.objective!r} rounds={self.rounds} moves={self.moves}"


def _neighbors(g: JointGraph) -> list[list[tuple[int, float]]]:
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(g.n_nodes)]
    for e in g.edges:
        nbrs[e.u].append((e.v, e.cost))
        nbrs[e.v].append((e.u, e.cost))
    return nbrs


def greedy_contraction_init(g: JointGraph) -> Decomposition:
    """Greedy additive edge contraction starting from singletons.

    Always contracts the component pair with the largest summed cost; ties
    go to the pair with the smallest (min node id, min node id).  Each
    component is represented by its smallest node id.
    """
    n = g.n_nodes
    adj: list[dict[int, float]] = [{} for _ in range(n)]
    for e in g.edges:
        adj[e.u][e.v] = e.cost
        adj[e.v][e.u] = e.cost
    alive = [True] * n
    version = [0] * n
    heap = [(-e.cost, min(e.u, e.v), max(e.u, e.v), 0, 0) for e in g.edges if e.cost > 0]
    heapq.heapify(heap)
    parent = list(range(n))
    while heap:
        neg_w, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        if -neg_w <= 0:
            break
        # absorb b into a (a < b keeps the min-id representative)
        del adj[a][b]
        del adj[b][a]
        for c, w in adj[b].items():
            merged = adj[a].get(c, 0.0) + w
            adj[a][c] = merged
            del adj[c][b]
            adj[c][a] = merged
        adj[b] = {}
        alive[b] = False
        parent[b] = a
        version[a] += 1
        for c, w in adj[a].items():
            if w > 0:
                lo, hi = (a, c) if a < c else (c, a)
                heapq.heappush(heap, (-w, lo, hi, version[lo], version[hi]))

    def root(x: int) -> int:
        while parent[x] != x:
            x = parent[x]
        return x

    return canonicalize([root(x) for x in range(n)])


def _kl_pass(nbrs, side, a, b, split, eps, stall=None):
    """One pass over the nodes of components ``a`` and ``b``.

    ``side`` maps every node in play to its component id and is mutated
    into the labeling after the best prefix.  Returns (gain, moved nodes).
    Gains are computed lazily: a node is scored once it borders the other
    side, and from then on updated incrementally.
    """
    gain: dict[int, float] = {}
    cross: dict[int, int] = {}
    scale = 0.0

    def score(v):
        nonlocal scale
        o = t = 0.0
        c = 0
        s = side[v]
        for u, w in nbrs[v]:
            su = side.get(u)
            if su is None:
                continue
            scale += abs(w)
            if su == s:
                o += w
            else:
                t += w
                c += 1
        gain[v] = t - o
        cross[v] = c

    def eligible(v):
        return cross[v] > 0 or (split and side[v] == a)

    if split:
        seeds = sorted(side)
    else:
        na = sum(1 for s in side.values() if s == a)
        small = a if 2 * na <= len(side) else b
        seeds = set()
        for v in side:
            if side[v] != small:
                continue
            for u, _ in nbrs[v]:
                su = side.get(u)
                if su is not None and su != small:
                    seeds.add(v)
                    seeds.add(u)
        seeds = sorted(seeds)
    for v in seeds:
        score(v)
    stamp = dict.fromkeys(seeds, 0)
    moved = set()
    heap = [(-gain[v], v, 0) for v in seeds if eligible(v)]
    heapq.heapify(heap)
    sequence = []
    origin = {}
    cumulative = 0.0
    best = 0.0
    best_len = 0
    while heap:
        neg_g, v, st = heapq.heappop(heap)
        if v in moved or st != stamp[v] or not eligible(v):
            continue
        x = side[v]
        y = b if x == a else a
        cumulative += gain[v]
        origin[v] = x
        side[v] = y
        moved.add(v)
        sequence.append(v)
        for u, w in nbrs[v]:
            su = side.get(u)
            if su is None or u in moved:
                continue
            if u not in gain:
                # first contact: score against the labeling after this move
                score(u)
                stamp[u] = 0
            else:
                if su == x:
                    gain[u] += 2.0 * w
                    cross[u] += 1
                else:
                    gain[u] -= 2.0 * w
                    cross[u] -= 1
                stamp[u] += 1
            if eligible(u):
                heapq.heappush(heap, (-gain[u], u, stamp[u]))
        # improvements below the rounding noise of a running sum are not real
        if cumulative > best + eps + 1e-9 * scale:
            best = cumulative
            best_len = len(sequence)
        elif stall is not None and len(sequence) - best_len >= stall:
            break
    for v in sequence[best_len:]:
        side[v] = origin[v]
    if best_len == 0:
        return 0.0, []
    return best, sequence[:best_len]


def kl_improve(
    g: JointGraph, d: Decomposition, params: SolveParams = SolveParams()
) -> tuple[Decomposition, SolveReport]:
    """Local improvement by two-component Kernighan-Lin passes and merges."""
    start = canonicalize(d)
    if len(start) != g.n_nodes:
        raise ValueError("decomposition does not label every node")
    nbrs = _neighbors(g)
    labels = list(start.labels)
    members: dict[int, set[int]] = {}
    for v, lab in enumerate(labels):
        members.setdefault(lab, set()).add(v)
    next_id = len(members)
    eps = params.gain_epsilon
    stall = params.max_stall_moves
    rounds = moves = 0
    # a pass depends only on the members of its two components, so a pass
    # that found nothing is not repeated until one of them changes
    version: dict[int, int] = {}
    tried: set[tuple] = set()

    def apply(side):
        nonlocal moves
        for v, lab in side.items():
            if labels[v] != lab:
                version[labels[v]] = version.get(labels[v], 0) + 1
                version[lab] = version.get(lab, 0) + 1
                members[labels[v]].discard(v)
                members.setdefault(lab, set()).add(v)
                labels[v] = lab
                moves += 1
        for lab in [k for k, m in members.items() if not m]:
            del members[lab]

    def exact_gain(moved, side):
        # sum only edges whose cut status flips, so pure relabelings score exactly 0
        moved_set = set(moved)
        total = 0.0
        for v in moved:
            for u, w in nbrs[v]:
                if u in moved_set and u < v:
                    continue
                was_cut = labels[u] != labels[v]
                now_cut = side.get(u, labels[u]) != side[v]
                if was_cut and not now_cut:
                    total += w
                elif now_cut and not was_cut:
                    total -= w
        return total

    def between(a, b):
        if len(members[b]) < len(members[a]):
            a, b = b, a
        total = 0.0
        for v in sorted(members[a]):
            for u, w in nbrs[v]:
                if labels[u] == b:
                    total += w
        return total

    for _ in range(params.max_outer_rounds):
        rounds += 1
        changed = False
        order = sorted(members, key=lambda k: min(members[k]))
        rank = {k: i for i, k in enumerate(order)}
        pairs = set()
        for e in g.edges:
            la, lb = labels[e.u], labels[e.v]
            if la != lb:
                pairs.add((la, lb) if rank[la] < rank[lb] else (lb, la))
        for a, b in sorted(pairs, key=lambda p: (rank[p[0]], rank[p[1]])):
            if a not in members or b not in members:
                continue
            key = (a, b, version.get(a, 0), version.get(b, 0))
            if key in tried:
                continue
            side = {v: a for v in sorted(members[a])}
            side.update({v: b for v in sorted(members[b])})
            w_ab = between(a, b)
            _, moved = _kl_pass(nbrs, side, a, b, False, eps, stall)
            gain = exact_gain(moved, side)
            if params.enable_merge_moves and w_ab > eps and w_ab > gain:
                apply({v: a for v in members[b]})
                changed = True
            elif gain > eps:
                apply(side)
                changed = True
            else:
                tried.add(key)
        for a in order:
            if a not in members or len(members[a]) < 2:
                continue
            key = (a, None, version.get(a, 0), 0)
            if key in tried:
                continue
            fresh = next_id
            side = {v: a for v in sorted(members[a])}
            _, moved = _kl_pass(nbrs, side, a, fresh, True, eps, stall)
            if exact_gain(moved, side) > eps:
                next_id += 1
                apply(side)
                changed = True
            else:
                tried.add(key)
        if not changed:
            break

    result = canonicalize(labels)
    before = objective(g, start)
    after = objective(g, result)
    if after > before:
        # rounding in incremental gains; never return a worse labeling
        result, after = start, before
    return result, SolveReport(after, rounds, moves, before)


def solve(g: JointGraph, params: SolveParams = SolveParams()) -> tuple[Decomposition, SolveReport]:
    """Improve two deterministic starts and keep the better result.

    The starts are greedy contraction and the all-joined partition, so the
    result is never worse than either trivial decomposition.  Ties keep the
    greedy start.
    """
    best = None
    for init in (greedy_contraction_init(g), Decomposition((0,) * g.n_nodes)):
        init_obj = objective(g, init)
        d, rep = kl_improve(g, init, params)
        if best is None or rep.objective < best[1].objective:
            best = canonicalize(d), SolveReport(rep.objective, rep.rounds, rep.moves, init_obj)
    return best


def restricted_growth_strings(n: int) -> np.ndarray:
    """All set partitions of ``n`` items as canonical label rows, in lexicographic order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        choices = top.astype(np.int64) + 2
        idx = np.repeat(np.arange(len(rows)), choices)
        offsets = np.repeat(np.cumsum(choices) - choices, choices)
        vals = (np.arange(len(idx)) - offsets).astype(np.int8)
        rows = np.hstack([rows[idx], vals[:, None]])
        top = np.maximum(top[idx], vals)
    return rows


def solve_exact(g: JointGraph) -> tuple[Decomposition, float]:
    """Minimum over all partitions; ties resolve to the lexicographically smallest labels."""
    n = g.n_nodes
    if n > MAX_EXACT_NODES:
        raise ValueError(f"exact solver limited to {MAX_EXACT_NODES} nodes, graph has {n}")
    rows = restricted_growth_strings(n)
    totals = np.zeros(len(rows))
    for e in g.edges:
        totals += e.cost * (rows[:, e.u] != rows[:, e.v])
    best = Decomposition(tuple(int(x) for x in rows[int(np.argmin(totals))]))
    return best, objective(g, best)
