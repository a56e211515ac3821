"""JSON formats for graphs and boundary operators.

Graph file::

    {"vertices": ["v"],
     "edges": [{"id": "e1", "a": 0.0, "b": 1.0, "from": "v", "to": "v",
                "alpha": 1.0, "beta": 0.0}]}

``"a": "-inf"`` and ``"b": "inf"`` mark semi-infinite edges; ``from``/``to``
are omitted (or null) on infinite ends.  ``alpha`` defaults to 1, ``beta``
to 0, and an optional top-level ``"min_length"`` stores the length bound.

Boundary-condition file::

    {"vertex_blocks": {"v": {"rows": 3, "cols": 3,
                             "entries": [[re, im], ...]}}}

with ``entries`` in row-major order.  Unknown keys are rejected in both.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .boundary import BoundaryOperator
from .graph_model import Edge, MetricGraph


class FormatError(ValueError):
    pass


_EDGE_KEYS = {"id", "a", "b", "from", "to", "alpha", "beta"}
_GRAPH_KEYS = {"vertices", "edges", "min_length"}
_BLOCK_KEYS = {"rows", "cols", "entries"}


def loads_json(text: str, what: str = "input"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON in {what} at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None


def _number(value, where: str) -> float:
    if isinstance(value, str):
        s = value.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
        raise FormatError(f"{where}: expected a number or '+/-inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def graph_from_dict(doc) -> MetricGraph:
    if not isinstance(doc, dict):
        raise FormatError("graph document must be an object")
    unknown = set(doc) - _GRAPH_KEYS
    if unknown:
        raise FormatError(f"unknown graph fields {sorted(unknown)}")
    if "vertices" not in doc or "edges" not in doc:
        raise FormatError("graph needs 'vertices' and 'edges'")
    edges = []
    for i, e in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        if not isinstance(e, dict):
            raise FormatError(f"{where}: expected an object")
        unknown = set(e) - _EDGE_KEYS
        if unknown:
            raise FormatError(f"{where}: unknown fields {sorted(unknown)}")
        for key in ("id", "a", "b"):
            if key not in e:
                raise FormatError(f"{where}: missing {key!r}")
        edges.append(Edge(
            id=str(e["id"]),
            a=_number(e["a"], f"{where}.a"),
            b=_number(e["b"], f"{where}.b"),
            origin=None if e.get("from") is None else str(e["from"]),
            terminus=None if e.get("to") is None else str(e["to"]),
            alpha=_number(e.get("alpha", 1.0), f"{where}.alpha"),
            beta=_number(e.get("beta", 0.0), f"{where}.beta"),
        ))
    lmin = doc.get("min_length")
    return MetricGraph(doc["vertices"], edges,
                       None if lmin is None else _number(lmin, "min_length"))


def _encode_endpoint(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def graph_to_dict(g: MetricGraph) -> dict:
    edges = []
    for e in g.edges:
        d = {"id": e.id, "a": _encode_endpoint(e.a), "b": _encode_endpoint(e.b)}
        if e.origin is not None:
            d["from"] = e.origin
        if e.terminus is not None:
            d["to"] = e.terminus
        d["alpha"] = e.alpha
        d["beta"] = e.beta
        edges.append(d)
    return {"vertices": list(g.vertices), "edges": edges, "min_length": g.min_length}


def bc_from_dict(doc) -> BoundaryOperator:
    if not isinstance(doc, dict) or set(doc) != {"vertex_blocks"}:
        raise FormatError("boundary file must be an object with the single key 'vertex_blocks'")
    blocks = {}
    for v, blk in doc["vertex_blocks"].items():
        where = f"vertex_blocks[{v!r}]"
        if not isinstance(blk, dict) or set(blk) != _BLOCK_KEYS:
            raise FormatError(f"{where}: needs exactly the keys {sorted(_BLOCK_KEYS)}")
        rows, cols = int(blk["rows"]), int(blk["cols"])
        entries = blk["entries"]
        if len(entries) != rows * cols:
            raise FormatError(f"{where}: {len(entries)} entries for a {rows}x{cols} block")
        vals = []
        for z in entries:
            if not (isinstance(z, (list, tuple)) and len(z) == 2):
                raise FormatError(f"{where}: entries must be [re, im] pairs")
            vals.append(complex(_number(z[0], where), _number(z[1], where)))
        blocks[str(v)] = np.array(vals, dtype=complex).reshape(rows, cols)
    return BoundaryOperator(blocks)


def bc_to_dict(bc: BoundaryOperator) -> dict:
    out = {}
    for v in sorted(bc.blocks):
        m = bc.blocks[v]
        out[v] = {"rows": int(m.shape[0]), "cols": int(m.shape[1]),
                  "entries": [[float(z.real), float(z.imag)] for z in m.ravel()]}
    return {"vertex_blocks": out}


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_graph(path) -> MetricGraph:
    return graph_from_dict(loads_json(Path(path).read_text(), str(path)))


def load_bc(path) -> BoundaryOperator:
    return bc_from_dict(loads_json(Path(path).read_text(), str(path)))


def fingerprint(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
