"""Spectral collocation of ``u -> alpha u''' + beta u'`` on every edge.

Each finite edge carries a Chebyshev-Gauss-Lobatto grid with ``n + 1``
nodes.  The vertex conditions ``L T_r u = T_l u`` are imposed by restricting
to the null space of ``C = T_l - L T_r``; the basis ``Z`` of that null space
is orthonormal in the discrete (mass-weighted) inner product, so the reduced
coordinates ``c`` of a state ``u = Z c`` satisfy ``|c| = ||u||``.

Two mass matrices are available: diagonal Clenshaw-Curtis weights (default)
and the exact Gram matrix of the nodal polynomial basis (``"legendre"``).
With the latter the Hermitian part of the reduced generator equals the
discrete boundary form exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np
import scipy.io
import scipy.linalg

from . import krein
from .boundary import BoundaryOperator, assemble_global
from .graph_model import Edge, MetricGraph, require_valid, vertex_slots

Mass = Literal["clenshaw_curtis", "legendre"]
DEFAULT_N = 48
MIN_N = 8


class DiscretizationError(ValueError):
    pass


def cheb_nodes(n: int) -> np.ndarray:
    """Lobatto points on ``[-1, 1]`` in increasing order."""
    k = np.arange(n + 1)
    return np.sin(np.pi * (2 * k - n) / (2 * n))


def cheb_diff(n: int) -> np.ndarray:
    """First-derivative matrix on :func:`cheb_nodes` (negative-sum trick)."""
    k = np.arange(n + 1)
    t = np.pi * k / n
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    # cos(t_i) - cos(t_j) in product form keeps relative accuracy near the ends
    dx = -2.0 * np.sin((t[:, None] + t[None, :]) / 2) * np.sin((t[:, None] - t[None, :]) / 2)
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    # the formula is for decreasing nodes cos(t_k); reverse to increasing order
    return D[::-1, ::-1].copy()


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / n
    return w[::-1].copy()


def barycentric_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolation matrix from values at Lobatto ``nodes`` to points ``x``."""
    n = len(nodes) - 1
    wb = (-1.0) ** np.arange(n + 1)
    wb[0] *= 0.5
    wb[-1] *= 0.5
    d = np.asarray(x, dtype=float)[:, None] - nodes[None, :]
    hit = d == 0.0
    d[hit] = 1.0
    t = wb / d
    P = t / t.sum(axis=1, keepdims=True)
    rows = np.nonzero(hit.any(axis=1))[0]
    P[rows] = hit[rows].astype(float)
    return P


@dataclass(frozen=True)
class EdgeGrid:
    edge_id: str
    n: int
    nodes: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    w: np.ndarray
    a: float
    b: float

    def mass_matrix(self, kind: Mass = "clenshaw_curtis") -> np.ndarray:
        if kind == "clenshaw_curtis":
            return np.diag(self.w)
        if kind == "legendre":
            g, wg = np.polynomial.legendre.leggauss(self.n + 2)
            P = barycentric_matrix(cheb_nodes(self.n), g)
            return P.T @ (wg[:, None] * P) * ((self.b - self.a) / 2)
        raise DiscretizationError(f"unknown mass matrix {kind!r}")

    def trace_rows(self, end: Literal["left", "right"]) -> np.ndarray:
        i = 0 if end == "left" else -1
        e = np.zeros(self.n + 1)
        e[i] = 1.0
        return np.vstack([e, self.D1[i], self.D2[i]])


def build_grid(edge: Edge, n: int = DEFAULT_N) -> EdgeGrid:
    if not edge.is_finite:
        raise DiscretizationError(f"edge {edge.id!r} is semi-infinite; truncate it first")
    if n < MIN_N:
        raise DiscretizationError(f"n must be at least {MIN_N} (got {n})")
    a, b = edge.a, edge.b
    s = 2.0 / (b - a)
    ref = cheb_nodes(n)
    x = a + (ref + 1.0) / s
    x[0], x[-1] = a, b
    D1 = cheb_diff(n) * s
    D2 = D1 @ D1
    D3 = D2 @ D1
    w = clenshaw_curtis_weights(n) / s
    grid = EdgeGrid(edge.id, n, x, D1, D2, D3, w, a, b)
    _check_exactness(grid)
    return grid


def _check_exactness(grid: EdgeGrid) -> None:
    # centred monomials keep the check scale-free on long edges
    h = (grid.b - grid.a) / 2
    xc = (grid.nodes - (grid.a + grid.b) / 2) / h
    for p in range(4):
        f = xc ** p
        for order, D in ((1, grid.D1), (2, grid.D2), (3, grid.D3)):
            if p >= order:
                coef = np.prod(np.arange(p, p - order, -1))
                exact = coef * xc ** (p - order) / h ** order
            else:
                exact = np.zeros_like(xc)
            err = np.abs(D @ f - exact).max()
            if err > 1e-12 * np.abs(D).sum(axis=1).max() + 1e-9:
                raise DiscretizationError(
                    f"edge {grid.edge_id!r}: D{order} fails polynomial exactness "
                    f"(p={p}, err={err:.2e})")
    if abs(grid.w.sum() - (grid.b - grid.a)) > 1e-12 * (grid.b - grid.a):
        raise DiscretizationError(f"edge {grid.edge_id!r}: quadrature weights do not sum to length")


def mass_orthonormalize(N: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Columns spanning ``range(N)`` with ``Z^* M Z = I`` (Cholesky-QR, twice)."""
    Z = N
    for _ in range(2):
        G = Z.conj().T @ M @ Z
        G = 0.5 * (G + G.conj().T)
        R = np.linalg.cholesky(G).conj().T
        Z = scipy.linalg.solve_triangular(R, Z.conj().T, trans="C", lower=False).conj().T
    return Z


@dataclass
class DiscreteSystem:
    """Constrained semi-discretization on a finite graph.

    Reduced coordinates ``c`` relate to nodal values by ``u = Z c``; the
    generator acting on ``c`` is ``A_red``.
    """

    graph: MetricGraph
    L: np.ndarray
    grids: list[EdgeGrid]
    offsets: dict[str, slice]
    mass: np.ndarray
    A_free: np.ndarray
    T_l: np.ndarray
    T_r: np.ndarray
    C: np.ndarray
    Z: np.ndarray
    A_red: np.ndarray
    B_l: np.ndarray
    B_r: np.ndarray
    kind: str = "chebyshev"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mass.shape[0]

    @property
    def dimension(self) -> int:
        return self.A_red.shape[0]

    def nodes(self, edge_id: str) -> np.ndarray:
        for g in self.grids:
            if g.edge_id == edge_id:
                return g.nodes
        raise KeyError(edge_id)

    def sample(self, func) -> np.ndarray:
        """Nodal values of ``func(edge, x)`` on every edge."""
        u = np.zeros(self.n_nodes, dtype=complex)
        for grid in self.grids:
            u[self.offsets[grid.edge_id]] = func(self.graph.edge(grid.edge_id), grid.nodes)
        return u

    def to_state(self, c: np.ndarray) -> np.ndarray:
        return self.Z @ c

    def reduce(self, u: np.ndarray) -> tuple[np.ndarray, float]:
        """Mass-orthogonal projection onto the constraint space.

        Returns the reduced coordinates and the relative projection residual.
        """
        u = np.asarray(u, dtype=complex)
        if u.shape != (self.n_nodes,):
            raise DiscretizationError(f"state has length {u.shape}, expected {self.n_nodes}")
        c = self.Z.conj().T @ (self.mass @ u)
        r = u - self.Z @ c
        nu = np.sqrt(abs(np.vdot(u, self.mass @ u)))
        res = float(np.sqrt(abs(np.vdot(r, self.mass @ r))) / nu) if nu > 0 else 0.0
        return c, res

    def norm2(self, u: np.ndarray) -> float:
        return float(np.vdot(u, self.mass @ u).real)

    def predicted_rate(self, u: np.ndarray) -> float:
        """``-<x|x>_r + <Lx|Lx>_l`` with ``x`` the right traces of ``u``."""
        x = self.T_r @ u
        y = self.L @ x
        return float((-np.vdot(x, self.B_r @ x) + np.vdot(y, self.B_l @ y)).real)


def discrete_traces(sys: DiscreteSystem, state: np.ndarray):
    """Right and left trace vectors of nodal values ``state``."""
    state = np.asarray(state)
    if state.shape != (sys.n_nodes,):
        raise DiscretizationError(f"state has length {state.shape}, expected {sys.n_nodes}")
    return sys.T_r @ state, sys.T_l @ state


def _grid_sizes(g: MetricGraph, n) -> dict[str, int]:
    if isinstance(n, Mapping):
        return {e.id: int(n.get(e.id, DEFAULT_N)) for e in g.edges}
    return {e.id: int(n) for e in g.edges}


def build_generator(g: MetricGraph, bc: BoundaryOperator, n=DEFAULT_N,
                    mass: Mass = "clenshaw_curtis") -> DiscreteSystem:
    require_valid(g)
    if not g.is_finite:
        raise DiscretizationError("graph has semi-infinite edges; truncate them first")
    L = assemble_global(g, bc)
    sizes = _grid_sizes(g, n)
    grids = [build_grid(e, sizes[e.id]) for e in g.edges]
    offsets, start = {}, 0
    for grid in grids:
        offsets[grid.edge_id] = slice(start, start + grid.n + 1)
        start += grid.n + 1
    total = start
    M = scipy.linalg.block_diag(*[gr.mass_matrix(mass) for gr in grids])
    A_free = scipy.linalg.block_diag(*[
        e.alpha * gr.D3 + e.beta * gr.D1 for e, gr in zip(g.edges, grids)]).astype(complex)

    def trace_matrix(side):
        rows = []
        for e in g.side_edges(side):
            gr = grids[[x.edge_id for x in grids].index(e.id)]
            block = np.zeros((3, total))
            block[:, offsets[e.id]] = gr.trace_rows(side)
            rows.append(block)
        return np.vstack(rows) if rows else np.zeros((0, total))

    T_l, T_r = trace_matrix("left"), trace_matrix("right")
    C = T_l.astype(complex) - L @ T_r
    _check_rank(g, bc, C)
    N = scipy.linalg.null_space(C)
    Z = mass_orthonormalize(N.astype(complex), M)
    A_red = Z.conj().T @ M @ A_free @ Z
    return DiscreteSystem(g, L, grids, offsets, M, A_free, T_l, T_r, C, Z, A_red,
                          krein.build_form(g, "left").matrix,
                          krein.build_form(g, "right").matrix)


def _check_rank(g: MetricGraph, bc: BoundaryOperator, C: np.ndarray) -> None:
    if C.shape[0] == 0:
        return
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[-1] > 1e-12 * sv[0]:
        return
    # locate a vertex whose own rows are dependent
    for v in g.vertices:
        rows, _ = vertex_slots(g, v)
        if rows:
            s = np.linalg.svd(C[rows], compute_uv=False)
            if s[-1] <= 1e-12 * sv[0]:
                raise DiscretizationError(f"constraints at vertex {v!r} are rank deficient")
    raise DiscretizationError("constraint matrix is rank deficient")


# ---------------------------------------------------------------------------
# Fourier path for the periodic loop.


def fourier_derivative(n: int, order: int, length: float = 1.0) -> np.ndarray:
    """Circulant spectral derivative on ``n`` equispaced points.

    The Nyquist mode is dropped for odd orders so that the matrix is real and
    exactly skew-symmetric.
    """
    k = np.fft.fftfreq(n, d=1.0 / n)
    sym = (2j * np.pi * k / length) ** order
    if order % 2 == 1 and n % 2 == 0:
        sym[n // 2] = 0.0
    col = np.fft.ifft(sym * np.fft.fft(np.eye(n)[:, 0])).real
    # first column of a circulant; build full matrix from it
    D = scipy.linalg.circulant(col)
    if order % 2 == 1:
        D = 0.5 * (D - D.T)
    else:
        D = 0.5 * (D + D.T)
    return D


def build_fourier_loop(g: MetricGraph, bc: BoundaryOperator, n: int = 32) -> DiscreteSystem:
    require_valid(g)
    if len(g.edges) != 1 or len(g.vertices) != 1:
        raise DiscretizationError("the Fourier path needs a single-vertex loop")
    e = g.edges[0]
    if e.origin != e.terminus or not e.is_finite:
        raise DiscretizationError("the Fourier path needs a closed loop edge")
    L = assemble_global(g, bc)
    if not np.array_equal(L, np.eye(3)):
        raise DiscretizationError("the Fourier path supports periodic (identity) conditions only")
    if n % 2 or n < MIN_N:
        raise DiscretizationError("n must be even and at least 8")
    h = e.length / n
    x = e.a + h * np.arange(n)
    D1, D2, D3 = (fourier_derivative(n, k, e.length) for k in (1, 2, 3))
    A = (e.alpha * D3 + e.beta * D1).astype(complex)
    M = h * np.eye(n)
    rows = np.vstack([np.eye(n)[0], D1[0], D2[0]])
    Z = np.eye(n, dtype=complex) / np.sqrt(h)
    grid = EdgeGrid(e.id, n, x, D1, D2, D3, np.full(n, h), e.a, e.b)
    B = krein.build_form(g, "left").matrix
    return DiscreteSystem(g, L, [grid], {e.id: slice(0, n)}, M, A, rows, rows,
                          np.zeros((3, n), dtype=complex), Z, A.copy(), B, B, kind="fourier")


def dump_matrix(path, matrix: np.ndarray, comment: str = "") -> None:
    """Write a dense matrix in Matrix Market array format."""
    scipy.io.mmwrite(str(path), np.asarray(matrix), comment=comment)


__all__ = [
    "DiscreteSystem", "DiscretizationError", "EdgeGrid", "build_fourier_loop", "build_generator",
    "build_grid", "cheb_diff", "cheb_nodes", "clenshaw_curtis_weights", "discrete_traces",
    "dump_matrix", "fourier_derivative", "mass_orthonormalize",
]
