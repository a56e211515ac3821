"""Vertex boundary operators: assembly, classification, sampling, examples.

A boundary operator holds one block ``L_v`` per vertex mapping the right
traces of the edges entering ``v`` to the left traces of the edges leaving
``v``.  The induced condition on an edge function ``u`` is
``L Tr_r u = Tr_l u``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg

from . import krein
from .graph_model import (
    Edge,
    GraphError,
    MetricGraph,
    incidence,
    loop_graph,
    require_valid,
    star_graph,
    vertex_slots,
)

VERDICTS = ("unitary", "bi_contractive", "contractive_only",
            "adjoint_contractive_only", "neither")

SECTION_61_MATRIX = np.array([[1.0, 0.0, 0.0],
                              [math.sqrt(2.0), 1.0, 0.0],
                              [1.0, math.sqrt(2.0), 1.0]], dtype=complex)


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryOperator:
    blocks: Mapping[str, np.ndarray]

    def __init__(self, blocks: Mapping[str, np.ndarray]):
        object.__setattr__(
            self, "blocks",
            {str(v): np.asarray(m, dtype=complex) for v, m in blocks.items()})

    def block(self, v: str) -> np.ndarray:
        return self.blocks[v]


def block_shape(g: MetricGraph, v: str) -> tuple[int, int]:
    out_edges, in_edges = incidence(g, v)
    return 3 * len(out_edges), 3 * len(in_edges)


def _checked_block(g: MetricGraph, bc: BoundaryOperator, v: str) -> np.ndarray:
    shape = block_shape(g, v)
    if v not in bc.blocks:
        if shape[0] * shape[1] == 0:
            return np.zeros(shape, dtype=complex)
        raise BoundaryError(f"vertex {v!r}: missing block of shape {shape}")
    m = bc.blocks[v]
    if m.shape != shape:
        raise BoundaryError(f"vertex {v!r}: block has shape {m.shape}, expected {shape}")
    return m


def assemble_global(g: MetricGraph, bc: BoundaryOperator) -> np.ndarray:
    require_valid(g)
    extra = set(bc.blocks) - set(g.vertices)
    if extra:
        raise BoundaryError(f"blocks given for unknown vertices {sorted(extra)}")
    n_l = 3 * len(g.side_edges("left"))
    n_r = 3 * len(g.side_edges("right"))
    L = np.zeros((n_l, n_r), dtype=complex)
    for v in g.vertices:
        m = _checked_block(g, bc, v)
        rows, cols = vertex_slots(g, v)
        if m.size:
            L[np.ix_(rows, cols)] = m
    return L


def vertex_forms(g: MetricGraph, v: str):
    """Restrictions ``(B_{r,v}, B_{l,v})`` of the global forms to ``v``."""
    rows, cols = vertex_slots(g, v)
    return (krein.build_form(g, "right").restrict(cols),
            krein.build_form(g, "left").restrict(rows))


@dataclass
class Verdict:
    verdict: str
    unitary: krein.Certificate
    contractive: krein.Certificate
    adjoint_contractive: krein.Certificate

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "unitary": self.unitary.to_dict(),
                "contractive": self.contractive.to_dict(),
                "adjoint_contractive": self.adjoint_contractive.to_dict()}


def _combine(unitary: bool, contractive: bool, adjoint: bool) -> str:
    if unitary:
        return "unitary"
    if contractive and adjoint:
        return "bi_contractive"
    if contractive:
        return "contractive_only"
    if adjoint:
        return "adjoint_contractive_only"
    return "neither"


def classify_matrix(B_r, B_l, L, tol: float = krein.DEFAULT_TOL) -> Verdict:
    u = krein.is_krein_unitary(B_r, B_l, L, tol)
    c = krein.is_krein_contractive(B_r, B_l, L, tol)
    adj = krein.krein_adjoint(B_r, B_l, L)
    a = krein.is_krein_contractive(B_l, B_r, adj, tol)
    return Verdict(_combine(bool(u), bool(c), bool(a)), u, c, a)


@dataclass
class Classification:
    per_vertex: dict[str, Verdict]
    global_direct: Verdict
    conjunction: str = field(init=False)

    def __post_init__(self):
        vs = self.per_vertex.values()
        self.conjunction = _combine(all(v.unitary for v in vs),
                                    all(v.contractive for v in vs),
                                    all(v.adjoint_contractive for v in vs))

    @property
    def verdict(self) -> str:
        return self.conjunction

    @property
    def consistent(self) -> bool:
        return self.conjunction == self.global_direct.verdict

    @property
    def generates_reasonable_dynamics(self) -> bool:
        return self.verdict in ("unitary", "bi_contractive")

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "global_direct": self.global_direct.to_dict(),
                "consistent": self.consistent,
                "vertices": {v: d.to_dict() for v, d in self.per_vertex.items()}}


def classify(g: MetricGraph, bc: BoundaryOperator,
             tol: float = krein.DEFAULT_TOL) -> Classification:
    L = assemble_global(g, bc)
    per_vertex = {}
    for v in g.vertices:
        Br, Bl = vertex_forms(g, v)
        per_vertex[v] = classify_matrix(Br, Bl, _checked_block(g, bc, v), tol)
    direct = classify_matrix(krein.build_form(g, "right"), krein.build_form(g, "left"), L, tol)
    return Classification(per_vertex, direct)


# ---------------------------------------------------------------------------
# Sampling admissible blocks in J-coordinates.


def j_factor(B) -> tuple[np.ndarray, int, int]:
    """``S`` with ``B = S^* J S`` and ``J = diag(I_p, -I_q)``.

    Eigenvalues are sorted in descending order so the positive directions
    come first; this fixed choice keeps the samplers reproducible.
    """
    B = krein._mat(B)
    lam, Q = np.linalg.eigh(B)
    order = np.argsort(-lam, kind="stable")
    lam, Q = lam[order], Q[:, order]
    p = int((lam > 0).sum())
    S = np.sqrt(np.abs(lam))[:, None] * Q.conj().T
    return S, p, len(lam) - p


def _signature_matrix(p: int, q: int) -> np.ndarray:
    return np.diag(np.r_[np.ones(p), -np.ones(q)]).astype(complex)


def _balanced_forms(g: MetricGraph, vertex: str):
    require_valid(g)
    out_edges, in_edges = incidence(g, vertex)
    if len(out_edges) != len(in_edges) or not out_edges:
        raise BoundaryError(
            f"vertex {vertex!r} is unbalanced: no Krein-unitary exists "
            f"(dim mismatch {3 * len(in_edges)} vs {3 * len(out_edges)})")
    Br, Bl = vertex_forms(g, vertex)
    Sr, pr, qr = j_factor(Br)
    Sl, pl, ql = j_factor(Bl)
    if (pr, qr) != (pl, ql):
        raise BoundaryError(f"vertex {vertex!r}: signatures {(pr, qr)} and {(pl, ql)} differ")
    return Sr, Sl, pr, qr


def _random_j_unitary(rng: np.random.Generator, p: int, q: int, scale: float) -> np.ndarray:
    d = p + q
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    A = 0.5 * (G - G.conj().T) * (scale / math.sqrt(2 * d))
    return scipy.linalg.expm(_signature_matrix(p, q) @ A)


def sample_unitary(g: MetricGraph, vertex: str, seed: int, scale: float = 1.0) -> np.ndarray:
    """A random Krein-unitary block for a balanced vertex.

    ``scale`` sets the size of the skew-Hermitian generator; ``scale=0``
    returns ``S_l^{-1} S_r``.
    """
    Sr, Sl, p, q = _balanced_forms(g, vertex)
    M = _random_j_unitary(np.random.default_rng(seed), p, q, scale)
    return np.linalg.solve(Sl, M @ Sr)


def _random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def sample_bicontraction(g: MetricGraph, vertex: str, seed: int,
                         strictness: float = 1.0, mix: bool = True,
                         scale: float = 1.0) -> np.ndarray:
    """A random block with both ``L`` and ``L#`` Krein-contractive.

    In J-coordinates the block is ``diag(P, Q)`` with ``P`` a contraction of
    norm at most ``1 - strictness/2`` and ``Q`` expansive with singular values
    at least ``1 + strictness/2``, optionally sandwiched between J-unitaries.
    """
    if not 0.0 <= strictness <= 1.0:
        raise BoundaryError("strictness must lie in [0, 1]")
    Sr, Sl, p, q = _balanced_forms(g, vertex)
    rng = np.random.default_rng(seed)
    sp = 1.0 - strictness * (0.5 + 0.5 * rng.random(p))
    sq = 1.0 + strictness * (0.5 + 0.5 * rng.random(q))
    P = _random_unitary(rng, p) @ np.diag(sp) @ _random_unitary(rng, p)
    Q = _random_unitary(rng, q) @ np.diag(sq) @ _random_unitary(rng, q)
    M = scipy.linalg.block_diag(P, Q)
    if mix:
        M = _random_j_unitary(rng, p, q, scale) @ M @ _random_j_unitary(rng, p, q, scale)
    return np.linalg.solve(Sl, M @ Sr)


# ---------------------------------------------------------------------------
# Built-in examples.


def two_halflines(length: float | None = None, alpha: float = 1.0, beta: float = 0.0,
                  matrix=SECTION_61_MATRIX):
    """Two half-lines meeting at ``v``; optionally truncated to ``length``.

    Truncation joins both far ends at an extra vertex ``far`` carrying the
    absorbing closure ``diag(1, 0, 1)``.
    """
    if length is None:
        g = MetricGraph(["v"], [Edge("e_in", -math.inf, 0.0, None, "v", alpha, beta),
                                Edge("e_out", 0.0, math.inf, "v", None, alpha, beta)])
        return g, BoundaryOperator({"v": matrix})
    if not length > 0:
        raise BoundaryError("truncation length must be positive")
    g = MetricGraph(["v", "far"], [Edge("e_in", -length, 0.0, "far", "v", alpha, beta),
                                   Edge("e_out", 0.0, length, "v", "far", alpha, beta)])
    return g, BoundaryOperator({"v": matrix, "far": np.diag([1.0, 0.0, 1.0])})


def star(n_in: int, n_out: int, block=None, length: float | None = None,
         alpha: float = 1.0, beta: float = 0.0):
    g = star_graph(n_in, n_out, length, alpha, beta)
    blocks = {}
    for v in g.vertices:
        shape = block_shape(g, v)
        blocks[v] = np.zeros(shape, dtype=complex)
    if block is not None:
        blocks["v"] = np.asarray(block, dtype=complex)
    return g, BoundaryOperator(blocks)


def loop_periodic(alpha: float = 1.0, beta: float = 0.0, length: float = 1.0):
    return loop_graph(alpha, beta, length), BoundaryOperator({"v": np.eye(3)})


def loop_diag(a: float, b: float, alpha: float = 1.0, beta: float = 0.0,
              length: float = 1.0):
    """Loop with ``u(0) = a u(1)``, ``u'(0) = b u'(1)``, ``u''(0) = u''(1)/a``."""
    if a == 0:
        raise BoundaryError("loop_diag requires a != 0")
    return loop_graph(alpha, beta, length), BoundaryOperator({"v": np.diag([a, b, 1.0 / a])})


BUILTINS = {
    "two_halflines_unitary": two_halflines,
    "star": star,
    "loop_periodic": loop_periodic,
    "loop_diag": loop_diag,
}


def builtin(name: str, *args, **kwargs):
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise BoundaryError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(*args, **kwargs)


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\)|:(.*))?\s*$")


def builtin_from_string(spec: str, **kwargs):
    """Parse ``"loop_diag(2, 0.5)"`` or ``"loop_diag:2,0.5"``."""
    m = _CALL.match(spec)
    if not m:
        raise BoundaryError(f"cannot parse builtin {spec!r}")
    name, paren, colon = m.groups()
    argstr = paren if paren is not None else colon
    args = []
    if argstr and argstr.strip():
        for tok in argstr.split(","):
            tok = tok.strip()
            try:
                args.append(int(tok))
            except ValueError:
                try:
                    args.append(float(tok))
                except ValueError:
                    raise BoundaryError(f"bad argument {tok!r} in {spec!r}") from None
    if name == "two_halflines_unitary" and args:
        kwargs.setdefault("length", float(args.pop(0)))
    return builtin(name, *args, **kwargs)


__all__ = [
    "BoundaryOperator", "BoundaryError", "Classification", "GraphError", "Verdict",
    "assemble_global", "builtin", "builtin_from_string", "classify", "classify_matrix",
    "j_factor", "loop_diag", "loop_periodic", "sample_bicontraction", "sample_unitary",
    "star", "two_halflines", "vertex_forms",
]
