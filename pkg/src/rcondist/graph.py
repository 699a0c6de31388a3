"""Coloured graphs, neighbourhoods and relaxed local models.

Vertices are integers ``0..p-1``. Edges are stored as ``(i, j)`` with
``i < j``. Class ids follow one convention everywhere: vertex classes take
ids ``0..T-1`` and edge classes ``T..T+S-1``.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

from .errors import InvalidGraph, RconError

Edge = tuple[int, int]


def _norm_edge(e: Sequence[int]) -> Edge:
    a, b = int(e[0]), int(e[1])
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}({self.detail})"


@dataclass(frozen=True, eq=False)
class ColouredGraph:
    """Skeleton graph plus vertex and edge colour classes.

    The constructor does not validate; use :func:`validate_coloured_graph`
    (or :meth:`check`) so that malformed inputs can still be inspected.
    """

    p: int
    edges: tuple[Edge, ...]
    vertex_classes: tuple[tuple[int, ...], ...]
    edge_classes: tuple[tuple[Edge, ...], ...]
    _adj: tuple[frozenset, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = [set() for _ in range(max(self.p, 0))]
        for a, b in self.edges:
            if 0 <= a < self.p and 0 <= b < self.p and a != b:
                adj[a].add(b)
                adj[b].add(a)
        object.__setattr__(self, "_adj", tuple(frozenset(s) for s in adj))

    @classmethod
    def from_lists(cls, p, edges, vertex_classes, edge_classes) -> "ColouredGraph":
        """Build a graph from plain (possibly unordered) lists."""
        return cls(
            p=int(p),
            edges=tuple(_norm_edge(e) for e in edges),
            vertex_classes=tuple(tuple(int(v) for v in c) for c in vertex_classes),
            edge_classes=tuple(tuple(_norm_edge(e) for e in c) for c in edge_classes),
        )

    @property
    def n_vertex_classes(self) -> int:
        return len(self.vertex_classes)

    @property
    def n_edge_classes(self) -> int:
        return len(self.edge_classes)

    @property
    def n_classes(self) -> int:
        return len(self.vertex_classes) + len(self.edge_classes)

    def neighbours(self, i: int) -> frozenset:
        return self._adj[i]

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adj[a]

    def vertex_class_of(self) -> list[int]:
        out = [-1] * self.p
        for k, cls_ in enumerate(self.vertex_classes):
            for v in cls_:
                out[v] = k
        return out

    def edge_class_of(self) -> dict[Edge, int]:
        """Map each edge to its class id (offset by T)."""
        T = self.n_vertex_classes
        return {e: T + k for k, cls_ in enumerate(self.edge_classes) for e in cls_}

    def check(self) -> None:
        violations = validate_coloured_graph(self)
        if violations:
            raise InvalidGraph(violations)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "edges": [list(e) for e in self.edges],
            "vertex_classes": [list(c) for c in self.vertex_classes],
            "edge_classes": [[list(e) for e in c] for c in self.edge_classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColouredGraph":
        return cls.from_lists(d["p"], d["edges"], d["vertex_classes"], d["edge_classes"])


def validate_coloured_graph(g: ColouredGraph) -> list[Violation]:
    """Return the list of invariant violations; empty means valid."""
    out: list[Violation] = []
    if g.p < 1:
        out.append(Violation("BadSize", f"p={g.p}"))
        return out
    seen_edges: set[Edge] = set()
    for e in g.edges:
        a, b = e
        if not (0 <= a < g.p and 0 <= b < g.p):
            out.append(Violation("InvalidVertex", f"edge {e}"))
        elif a == b:
            out.append(Violation("SelfLoop", f"{e}"))
        elif e in seen_edges:
            out.append(Violation("DuplicateEdge", f"{e}"))
        seen_edges.add(e)

    owner: dict[int, int] = {}
    for k, cls_ in enumerate(g.vertex_classes):
        if not cls_:
            out.append(Violation("EmptyClass", f"vertex class {k}"))
        for v in cls_:
            if not 0 <= v < g.p:
                out.append(Violation("InvalidVertex", f"vertex {v} in class {k}"))
            elif v in owner:
                out.append(Violation("PartitionViolation", f"vertex {v} repeated in classes {owner[v]} and {k}"))
            else:
                owner[v] = k
    for v in range(g.p):
        if v not in owner:
            out.append(Violation("PartitionViolation", f"vertex {v} uncoloured"))

    T = g.n_vertex_classes
    eowner: dict[Edge, int] = {}
    for k, cls_ in enumerate(g.edge_classes):
        if not cls_:
            out.append(Violation("EmptyClass", f"edge class {T + k}"))
        for e in cls_:
            if e not in seen_edges:
                out.append(Violation("UnknownEdge", f"{e} in class {T + k}"))
            elif e in eowner:
                out.append(Violation("PartitionViolation", f"edge {e} repeated in classes {eowner[e]} and {T + k}"))
            else:
                eowner[e] = T + k
    for e in seen_edges:
        if e not in eowner and e[0] != e[1]:
            out.append(Violation("PartitionViolation", f"edge {e} uncoloured"))
    return out


def _check_vertex(g: ColouredGraph, i) -> int:
    try:
        i = operator.index(i)
    except TypeError:
        raise RconError(f"invalid vertex id {i!r}") from None
    if not 0 <= i < g.p:
        raise RconError(f"invalid vertex id {i} for p={g.p}")
    return i


def neighbourhood(g: ColouredGraph, i: int, hops: int) -> tuple[int, ...]:
    """``{i} ∪ ne(i)`` for one hop, plus neighbours of neighbours for two."""
    i = _check_vertex(g, i)
    if hops not in (1, 2):
        raise RconError(f"hops must be 1 or 2, got {hops!r}")
    out = {i} | g.neighbours(i)
    if hops == 2:
        for j in g.neighbours(i):
            out |= g.neighbours(j)
    return tuple(sorted(out))


def buffer_split(g: ColouredGraph, nbhd: Iterable[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split a vertex set into (protected, buffer).

    Buffer vertices have at least one neighbour outside the set.
    """
    members = set(nbhd)
    protected, buffer = [], []
    for j in sorted(members):
        (buffer if g.neighbours(j) - members else protected).append(j)
    return tuple(protected), tuple(buffer)


@dataclass(frozen=True, eq=False)
class LocalModel:
    """Relaxed marginal model centred at one vertex.

    ``local_graph`` uses local vertex ids (positions in ``vertices``).
    ``class_map[r]`` is the global class id of local class ``r`` or
    ``None`` for the free buffer classes.
    """

    centre: int
    hops: int
    vertices: tuple[int, ...]
    protected: tuple[int, ...]
    buffer: tuple[int, ...]
    local_graph: ColouredGraph
    class_map: tuple[Optional[int], ...]

    @property
    def p_local(self) -> int:
        return len(self.vertices)

    @property
    def n_params(self) -> int:
        return len(self.class_map)

    def mapped(self) -> list[tuple[int, int]]:
        """(local class, global class) pairs that carry a global id."""
        return [(r, k) for r, k in enumerate(self.class_map) if k is not None]


def local_model(g: ColouredGraph, i: int, hops: int) -> LocalModel:
    nbhd = neighbourhood(g, i, hops)
    protected, buffer = buffer_split(g, nbhd)
    pos = {v: a for a, v in enumerate(nbhd)}
    prot = set(protected)
    vclass = g.vertex_class_of()
    eclass = g.edge_class_of()

    # inherited vertex classes, ascending global id
    inherited_v: dict[int, list[int]] = {}
    for v in protected:
        inherited_v.setdefault(vclass[v], []).append(pos[v])
    # preserved edges: skeleton edges inside N_i with a protected endpoint
    inherited_e: dict[int, list[Edge]] = {}
    for a_idx, a in enumerate(nbhd):
        for b in nbhd[a_idx + 1:]:
            if (a in prot or b in prot) and g.has_edge(a, b):
                inherited_e.setdefault(eclass[(a, b)], []).append((pos[a], pos[b]))

    vertex_classes: list[tuple[int, ...]] = []
    class_map: list[Optional[int]] = []
    for k in sorted(inherited_v):
        vertex_classes.append(tuple(inherited_v[k]))
        class_map.append(k)
    for v in buffer:
        vertex_classes.append((pos[v],))
        class_map.append(None)

    edge_classes: list[tuple[Edge, ...]] = []
    for k in sorted(inherited_e):
        edge_classes.append(tuple(inherited_e[k]))
        class_map.append(k)
    bb_edges = [(pos[a], pos[b]) for a, b in combinations(buffer, 2)]
    for e in bb_edges:
        edge_classes.append((e,))
        class_map.append(None)

    local_edges = sorted({e for c in edge_classes for e in c})
    lg = ColouredGraph(
        p=len(nbhd),
        edges=tuple(local_edges),
        vertex_classes=tuple(vertex_classes),
        edge_classes=tuple(edge_classes),
    )
    return LocalModel(
        centre=int(i),
        hops=hops,
        vertices=nbhd,
        protected=protected,
        buffer=buffer,
        local_graph=lg,
        class_map=tuple(class_map),
    )


def cycle_graph(p: int, vertex_classes=None, edge_classes=None) -> ColouredGraph:
    """Cycle ``0-1-...-(p-1)-0``; all-singleton colouring unless given."""
    edges = [(v, v + 1) for v in range(p - 1)] + [(0, p - 1)]
    vc = vertex_classes if vertex_classes is not None else [[v] for v in range(p)]
    ec = edge_classes if edge_classes is not None else [[e] for e in edges]
    return ColouredGraph.from_lists(p, edges, vc, ec)


def complete_graph(p: int) -> ColouredGraph:
    """Complete graph with every vertex and edge in its own class."""
    edges = list(combinations(range(p), 2))
    return ColouredGraph.from_lists(p, edges, [[v] for v in range(p)], [[e] for e in edges])
