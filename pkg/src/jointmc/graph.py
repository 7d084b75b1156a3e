"""Heterogeneous multicut graph, decompositions and the cut objective.

Nodes carry a layer (``HIGH`` for detections, ``LOW`` for point
trajectories) and every edge carries a class consistent with its endpoint
layers.  A feasible edge labeling (every cut edge connects two different
connected components of the joined subgraph) is in one-to-one
correspondence with a partition of the node set.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class Layer(enum.Enum):
    HIGH = "high"
    LOW = "low"


class EdgeClass(enum.Enum):
    HH = "HH"
    LL = "LL"
    HL = "HL"


class GraphError(ValueError):
    """Raised for malformed graph input.  ``edge_index`` names the offending edge."""

    def __init__(self, message: str, edge_index: int | None = None):
        super().__init__(message)
        self.edge_index = edge_index


def edge_class_for(a: Layer, b: Layer) -> EdgeClass:
    if a is Layer.HIGH and b is Layer.HIGH:
        return EdgeClass.HH
    if a is Layer.LOW and b is Layer.LOW:
        return EdgeClass.LL
    return EdgeClass.HL


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    cls: EdgeClass
    cost: float


@dataclass(frozen=True)
class JointGraph:
    """Sealed undirected graph.  Construct through :func:`build_graph`."""

    layers: tuple[Layer, ...]
    edges: tuple[Edge, ...]
    # node -> tuple of (neighbor, edge index)
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.layers)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_high(self) -> int:
        return sum(1 for layer in self.layers if layer is Layer.HIGH)

    @property
    def n_low(self) -> int:
        return self.n_nodes - self.n_high

    def count(self, cls: EdgeClass) -> int:
        return sum(1 for e in self.edges if e.cls is cls)


def build_graph(
    layers: Sequence[Layer],
    edges: Iterable[tuple[int, int, EdgeClass | str, float]],
) -> JointGraph:
    """Validate and seal a graph.  Edge order is preserved as given."""
    layers = tuple(layers)
    n = len(layers)
    sealed: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, (u, v, cls, cost) in enumerate(edges):
        cls = EdgeClass(cls) if not isinstance(cls, EdgeClass) else cls
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge {i}: endpoint out of range ({u}, {v})", i)
        if u == v:
            raise GraphError(f"edge {i}: self-loop at node {u}", i)
        if edge_class_for(layers[u], layers[v]) is not cls:
            raise GraphError(
                f"edge {i}: class {cls.value} does not match layers "
                f"{layers[u].value}/{layers[v].value}",
                i,
            )
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"edge {i}: duplicate edge {key}", i)
        cost = float(cost)
        if cost != cost or cost in (float("inf"), float("-inf")):
            raise GraphError(f"edge {i}: non-finite cost", i)
        seen.add(key)
        sealed.append(Edge(u, v, cls, cost))
        adjacency[u].append((v, i))
        adjacency[v].append((u, i))
    return JointGraph(layers, tuple(sealed), tuple(tuple(a) for a in adjacency))


@dataclass(frozen=True)
class Decomposition:
    """Node -> component id.  Equality of partitions is via :func:`canonicalize`."""

    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_components(self) -> int:
        return len(set(self.labels))

    def components(self) -> list[list[int]]:
        """Node lists, ordered by smallest member."""
        groups: dict[int, list[int]] = {}
        for node, lab in enumerate(self.labels):
            groups.setdefault(lab, []).append(node)
        return sorted(groups.values(), key=lambda g: g[0])


def canonicalize(d: Decomposition | Sequence[int]) -> Decomposition:
    labels = d.labels if isinstance(d, Decomposition) else tuple(d)
    remap: dict[int, int] = {}
    out = []
    for lab in labels:
        if lab not in remap:
            remap[lab] = len(remap)
        out.append(remap[lab])
    return Decomposition(tuple(out))


def _check_labels(g: JointGraph, d: Decomposition) -> None:
    if len(d.labels) != g.n_nodes:
        raise ValueError(
            f"decomposition labels {len(d.labels)} nodes, graph has {g.n_nodes}"
        )


def objective(g: JointGraph, d: Decomposition) -> float:
    """Sum of costs of edges whose endpoints lie in different components."""
    _check_labels(g, d)
    labels = d.labels
    total = 0.0
    for e in g.edges:
        if labels[e.u] != labels[e.v]:
            total += e.cost
    return total


def labeling_objective(g: JointGraph, y: Sequence[int]) -> float:
    _check_length(g, y)
    total = 0.0
    for e, bit in zip(g.edges, y):
        if bit:
            total += e.cost
    return total


def _check_length(g: JointGraph, y: Sequence[int]) -> None:
    if len(y) != g.n_edges:
        raise ValueError(f"labeling has {len(y)} entries, graph has {g.n_edges} edges")


def _join_components(g: JointGraph, y: Sequence[int]) -> list[int]:
    parent = list(range(g.n_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e, bit in zip(g.edges, y):
        if not bit:
            a, b = find(e.u), find(e.v)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return [find(x) for x in range(g.n_nodes)]


def violated_edge(g: JointGraph, y: Sequence[int]) -> int | None:
    """Index of the first cut edge lying inside a joined component, if any."""
    _check_length(g, y)
    roots = _join_components(g, y)
    for i, (e, bit) in enumerate(zip(g.edges, y)):
        if bit and roots[e.u] == roots[e.v]:
            return i
    return None


def is_feasible(g: JointGraph, y: Sequence[int]) -> bool:
    """True iff ``y`` satisfies every cycle inequality of ``g``."""
    return violated_edge(g, y) is None


def labeling_of(g: JointGraph, d: Decomposition) -> tuple[int, ...]:
    _check_labels(g, d)
    labels = d.labels
    return tuple(int(labels[e.u] != labels[e.v]) for e in g.edges)


def decomposition_of(g: JointGraph, y: Sequence[int]) -> Decomposition:
    bad = violated_edge(g, y)
    if bad is not None:
        e = g.edges[bad]
        raise ValueError(
            f"infeasible labeling: cut edge {bad} ({e.u}, {e.v}) lies on a joined cycle"
        )
    return canonicalize(_join_components(g, y))


# -- text formats -----------------------------------------------------------

GRAPH_HEADER = "jtms-graph 1"
SOLUTION_HEADER = "jtms-sol 1"


def dump_graph(g: JointGraph) -> str:
    """Serialize; high nodes must occupy indices ``0..n_high-1``."""
    h = g.n_high
    if any(layer is not Layer.HIGH for layer in g.layers[:h]):
        raise ValueError("graph dump requires high-layer nodes to precede low-layer nodes")
    lines = [GRAPH_HEADER, f"n {h} {g.n_low}"]
    lines.extend(f"e {e.u} {e.v} {e.cls.value} {e.cost!r}" for e in g.edges)
    return "\n".join(lines) + "\n"


def _parse_error(lineno: int, msg: str) -> ValueError:
    return ValueError(f"line {lineno}: {msg}")


def load_graph(text: str) -> JointGraph:
    lines = text.splitlines()
    if not lines or lines[0].strip() != GRAPH_HEADER:
        raise _parse_error(1, f"expected header {GRAPH_HEADER!r}")
    layers: list[Layer] | None = None
    edges = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "n" and len(parts) == 3 and layers is None:
                layers = [Layer.HIGH] * int(parts[1]) + [Layer.LOW] * int(parts[2])
            elif parts[0] == "e" and len(parts) == 5 and layers is not None:
                edges.append((int(parts[1]), int(parts[2]), EdgeClass(parts[3]), float(parts[4])))
            else:
                raise _parse_error(lineno, f"unexpected record {raw!r}")
        except ValueError as exc:
            if str(exc).startswith("line "):
                raise
            raise _parse_error(lineno, str(exc)) from exc
    if layers is None:
        raise _parse_error(len(lines), "missing node count record")
    return build_graph(layers, edges)


def dump_solution(d: Decomposition) -> str:
    lines = [SOLUTION_HEADER]
    lines.extend(f"c {node} {lab}" for node, lab in enumerate(d.labels))
    return "\n".join(lines) + "\n"


def load_solution(text: str) -> Decomposition:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SOLUTION_HEADER:
        raise _parse_error(1, f"expected header {SOLUTION_HEADER!r}")
    entries: dict[int, int] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] != "c" or len(parts) != 3:
            raise _parse_error(lineno, f"unexpected record {raw!r}")
        entries[int(parts[1])] = int(parts[2])
    if sorted(entries) != list(range(len(entries))):
        raise ValueError("solution does not label a contiguous node range")
    return Decomposition(tuple(entries[i] for i in range(len(entries))))
