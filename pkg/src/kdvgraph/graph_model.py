"""Metric graphs, edge incidence and the index layout of trace spaces.

A metric graph is a finite set of vertices and a finite list of directed
edges, each identified with an interval ``(a, b)``.  Either end may be
infinite; a finite left end is attached to its ``origin`` vertex and a finite
right end to its ``terminus`` vertex.

Trace spaces are indexed edge-major: for every edge in lexicographic id order
the three components ``(u, u', u'')`` appear consecutively.  The left trace
space enumerates edges with a finite left end, the right one edges with a
finite right end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal

Side = Literal["left", "right"]
SIDES: tuple[Side, Side] = ("left", "right")


class GraphError(ValueError):
    """Raised when a graph is structurally unusable or a lookup fails."""


@dataclass(frozen=True)
class Edge:
    id: str
    a: float
    b: float
    origin: str | None = None
    terminus: str | None = None
    alpha: float = 1.0
    beta: float = 0.0

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def has_left(self) -> bool:
        return math.isfinite(self.a)

    @property
    def has_right(self) -> bool:
        return math.isfinite(self.b)

    @property
    def is_finite(self) -> bool:
        return self.has_left and self.has_right


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class MetricGraph:
    """Immutable metric graph; ``edges`` are kept sorted by id.

    ``min_length`` is the stored lower bound on edge lengths.  When omitted it
    is taken as the smallest edge length, which is the sharpest valid bound
    for a finite edge set.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    min_length: float | None = None
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __init__(self, vertices: Iterable[str], edges: Iterable[Edge],
                 min_length: float | None = None):
        verts = tuple(sorted(dict.fromkeys(str(v) for v in vertices)))
        edge_list = tuple(sorted(edges, key=lambda e: e.id))
        if min_length is None and edge_list:
            min_length = min(e.length for e in edge_list)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edge_list)
        object.__setattr__(self, "min_length", min_length)
        object.__setattr__(self, "_by_id", {e.id: e for e in edge_list})

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._by_id[edge_id]
        except KeyError:
            raise GraphError(f"unknown edge id {edge_id!r}") from None

    def side_edges(self, side: Side) -> tuple[Edge, ...]:
        """``E_l`` (finite left end) or ``E_r`` (finite right end)."""
        if side == "left":
            return tuple(e for e in self.edges if e.has_left)
        if side == "right":
            return tuple(e for e in self.edges if e.has_right)
        raise GraphError(f"side must be 'left' or 'right', got {side!r}")

    @property
    def is_finite(self) -> bool:
        return all(e.is_finite for e in self.edges)


def validate_graph(g: MetricGraph) -> ValidationReport:
    """Collect every structural violation; never raises."""
    out: list[str] = []
    seen: set[str] = set()
    ids = [e.id for e in g.edges]
    for eid in ids:
        if eid in seen:
            out.append(f"duplicate edge id {eid!r}")
        seen.add(eid)
    verts = set(g.vertices)
    for e in g.edges:
        tag = f"edge {e.id!r}:"
        if math.isnan(e.a) or math.isnan(e.b) or not e.a < e.b:
            out.append(f"{tag} a_e < b_e fails (a={e.a}, b={e.b})")
        if e.a == math.inf or e.b == -math.inf:
            out.append(f"{tag} endpoint on the wrong side of the real line")
        if not (math.isfinite(e.alpha) and e.alpha > 0):
            out.append(f"{tag} alpha must be positive (got {e.alpha})")
        if not math.isfinite(e.beta):
            out.append(f"{tag} beta must be finite (got {e.beta})")
        if e.has_left and e.origin is None:
            out.append(f"{tag} dangling finite left endpoint (no 'from' vertex)")
        if not e.has_left and e.origin is not None:
            out.append(f"{tag} 'from' given for an infinite left end")
        if e.has_right and e.terminus is None:
            out.append(f"{tag} dangling finite right endpoint (no 'to' vertex)")
        if not e.has_right and e.terminus is not None:
            out.append(f"{tag} 'to' given for an infinite right end")
        for v in (e.origin, e.terminus):
            if v is not None and v not in verts:
                out.append(f"{tag} unknown vertex {v!r}")
    lmin = g.min_length
    if g.edges:
        if lmin is None or not lmin > 0:
            out.append(f"edge length lower bound must be positive (got {lmin})")
        else:
            for e in g.edges:
                if e.a < e.b and e.length < lmin:
                    out.append(f"edge {e.id!r}: length {e.length} below bound {lmin}")
    return ValidationReport(tuple(out))


def require_valid(g: MetricGraph) -> MetricGraph:
    report = validate_graph(g)
    if not report.ok:
        raise GraphError("invalid graph: " + "; ".join(report.violations))
    return g


def incidence(g: MetricGraph, v: str) -> tuple[list[Edge], list[Edge]]:
    """Edges leaving ``v`` (left ends at v) and edges entering ``v``."""
    if v not in g.vertices:
        raise GraphError(f"unknown vertex {v!r}")
    out_edges = [e for e in g.edges if e.has_left and e.origin == v]
    in_edges = [e for e in g.edges if e.has_right and e.terminus == v]
    return out_edges, in_edges


@dataclass(frozen=True)
class TraceLayout:
    side: Side
    entries: tuple[tuple[str, int], ...]

    @property
    def dimension(self) -> int:
        return len(self.entries)

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(eid for eid, k in self.entries[::3])

    def index(self, edge_id: str, k: int) -> int:
        if k not in (0, 1, 2):
            raise GraphError(f"trace component must be 0, 1 or 2 (got {k})")
        try:
            slot = self.edge_ids.index(edge_id)
        except ValueError:
            raise GraphError(f"edge {edge_id!r} has no {self.side} trace") from None
        return 3 * slot + k

    def pair(self, i: int) -> tuple[str, int]:
        return self.entries[i]

    def block_indices(self, edge_ids: Iterable[str]) -> list[int]:
        """Positions of the full ``(t0, t1, t2)`` blocks for ``edge_ids``."""
        return [self.index(eid, k) for eid in edge_ids for k in range(3)]


def trace_layout(g: MetricGraph, side: Side) -> TraceLayout:
    entries = tuple((e.id, k) for e in g.side_edges(side) for k in range(3))
    return TraceLayout(side, entries)


def vertex_slots(g: MetricGraph, v: str) -> tuple[list[int], list[int]]:
    """Global left/right trace indices belonging to vertex ``v``."""
    out_edges, in_edges = incidence(g, v)
    left = trace_layout(g, "left").block_indices(e.id for e in out_edges)
    right = trace_layout(g, "right").block_indices(e.id for e in in_edges)
    return left, right


# ---------------------------------------------------------------------------
# Graph factories used by the built-in examples and the tests.


def loop_graph(alpha: float = 1.0, beta: float = 0.0, length: float = 1.0) -> MetricGraph:
    return MetricGraph(["v"], [Edge("e1", 0.0, length, "v", "v", alpha, beta)])


def path_graph(n_edges: int = 2, length: float = 1.0, alpha: float = 1.0,
               beta: float = 0.0) -> MetricGraph:
    """Chain ``v0 -> v1 -> ... -> vn`` of finite edges."""
    verts = [f"v{i}" for i in range(n_edges + 1)]
    edges = [Edge(f"e{i + 1}", 0.0, length, verts[i], verts[i + 1], alpha, beta)
             for i in range(n_edges)]
    return MetricGraph(verts, edges)


def star_graph(n_in: int, n_out: int, length: float | None = None,
               alpha: float = 1.0, beta: float = 0.0) -> MetricGraph:
    """Star centred at ``v``; half-lines unless ``length`` is given.

    Incoming edges are ``(-inf, 0]`` (or ``[-length, 0]``) ending at ``v``,
    outgoing edges are ``[0, inf)`` (or ``[0, length]``) starting at ``v``.
    Finite stars attach each far end to its own leaf vertex.
    """
    verts = ["v"]
    edges = []
    for i in range(n_in):
        eid = f"in{i + 1}"
        if length is None:
            edges.append(Edge(eid, -math.inf, 0.0, None, "v", alpha, beta))
        else:
            leaf = f"leaf_{eid}"
            verts.append(leaf)
            edges.append(Edge(eid, -length, 0.0, leaf, "v", alpha, beta))
    for i in range(n_out):
        eid = f"out{i + 1}"
        if length is None:
            edges.append(Edge(eid, 0.0, math.inf, "v", None, alpha, beta))
        else:
            leaf = f"leaf_{eid}"
            verts.append(leaf)
            edges.append(Edge(eid, 0.0, length, "v", leaf, alpha, beta))
    return MetricGraph(verts, edges)
