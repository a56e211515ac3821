"""Continuous-level checks: trace lifting, the Green identity, convergence.

A lift of a trace triple ``(t0, t1, t2)`` at an edge end is the Taylor
polynomial ``t0 + t1 s + t2 s^2 / 2`` multiplied by a cutoff that equals one
near the end and vanishes beyond a window ``w <= min(l_min, length) / 2``.
The cutoff blends with the degree-7 smoothstep, so the lift is a piecewise
polynomial with a continuous third derivative and every integral below is
evaluated exactly by Gauss-Legendre quadrature on the pieces.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from . import krein
from .boundary import BoundaryOperator
from .discretization import build_fourier_loop, build_generator
from .evolution import evolve, propagator
from .graph_model import MetricGraph, Side, require_valid

SMOOTHSTEP7 = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
MIN_QUAD_ORDER = 4


class VerificationError(ValueError):
    pass


@dataclass(frozen=True)
class LiftedFunction:
    edge_id: str
    end: Side
    anchor: float
    traces: tuple[complex, complex, complex]
    window: float
    pieces: tuple[tuple[float, float, Polynomial], ...] = field(repr=False)

    @property
    def direction(self) -> int:
        return 1 if self.end == "left" else -1

    def knots(self) -> list[float]:
        ends = {0.0, self.window} | {lo for lo, _, _ in self.pieces}
        return [self.anchor + self.direction * s for s in sorted(ends)]

    def __call__(self, x, k: int = 0) -> np.ndarray:
        """``k``-th derivative with respect to the edge coordinate ``x``."""
        x = np.asarray(x, dtype=float)
        s = self.direction * (x - self.anchor)
        out = np.zeros(x.shape, dtype=complex)
        for lo, hi, poly in self.pieces:
            mask = (s >= lo) & (s <= hi) if lo == 0.0 else (s > lo) & (s <= hi)
            if hi <= lo:
                continue
            if np.any(mask):
                out[mask] = poly.deriv(k)(s[mask]) if k else poly(s[mask])
        return out * self.direction ** k


def lift_one(edge_id: str, end: Side, anchor: float, traces, window: float,
             flat: bool = True) -> LiftedFunction:
    """Lift of one trace triple.

    With ``flat`` the cutoff is one on the first half of the window and blends
    to zero on the second half.  Without it the blend spans the whole window,
    making the lift a single degree-9 polynomial there; use a window equal to
    the edge length to get a lift that collocation reproduces exactly.
    """
    t0, t1, t2 = (complex(t) for t in traces)
    sign = 1 if end == "left" else -1
    # Taylor polynomial in the distance s from the anchor; x - anchor = sign * s
    taylor = Polynomial([t0, sign * t1, 0.5 * t2])
    start = 0.5 * window if flat else 0.0
    # blend in the local variable (s - start) / (window - start) to avoid cancellation
    local = dict(domain=[start, window], window=[0.0, 1.0])
    blend = Polynomial((1 - SMOOTHSTEP7).coef, **local)
    tail = taylor.convert(**local) * blend
    pieces = ((0.0, start, taylor), (start, window, tail)) if flat else ((0.0, window, tail),)
    return LiftedFunction(edge_id, end, anchor, (t0, t1, t2), window, pieces)


def lift_window(g: MetricGraph, edge_id: str) -> float:
    e = g.edge(edge_id)
    base = min(g.min_length, e.length)
    # only half-lines: any window works
    return 0.5 * base if np.isfinite(base) else 1.0


def lift_traces(g: MetricGraph, side: Side, values, cutoff: str = "windowed") -> list[LiftedFunction]:
    """One lift per edge of ``side``, reproducing ``values`` at those ends.

    ``cutoff="windowed"`` gives compactly supported lifts that vanish on the
    far half of each edge.  ``cutoff="edge_polynomial"`` blends across the
    whole (finite) edge instead, so each lift is one polynomial of degree 9.
    """
    require_valid(g)
    if cutoff not in ("windowed", "edge_polynomial"):
        raise VerificationError(f"unknown cutoff {cutoff!r}")
    edges = g.side_edges(side)
    values = np.asarray(values, dtype=complex)
    if values.shape != (3 * len(edges),):
        raise VerificationError(f"expected {3 * len(edges)} trace values, got {values.shape}")
    out = []
    for i, e in enumerate(edges):
        anchor = e.a if side == "left" else e.b
        vals = values[3 * i:3 * i + 3]
        if cutoff == "windowed":
            out.append(lift_one(e.id, side, anchor, vals, lift_window(g, e.id)))
        else:
            if not e.is_finite:
                raise VerificationError(f"edge {e.id!r}: edge_polynomial lifts need a finite edge")
            out.append(lift_one(e.id, side, anchor, vals, e.length, flat=False))
    return out


def evaluate(lifts: Sequence[LiftedFunction], edge_id: str, x, k: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape, dtype=complex)
    for f in lifts:
        if f.edge_id == edge_id:
            total += f(x, k)
    return total


def exact_traces(g: MetricGraph, lifts: Sequence[LiftedFunction], side: Side) -> np.ndarray:
    out = []
    for e in g.side_edges(side):
        x = np.array([e.a if side == "left" else e.b])
        out += [evaluate(lifts, e.id, x, k)[0] for k in range(3)]
    return np.array(out, dtype=complex)


def _panels(g: MetricGraph, lifts: Sequence[LiftedFunction], edge_id: str) -> np.ndarray:
    # lifts vanish outside their windows, so half-lines are cut at the knots
    e = g.edge(edge_id)
    pts = {p for p in (e.a, e.b) if np.isfinite(p)}
    for f in lifts:
        if f.edge_id == edge_id:
            pts.update(f.knots())
    return np.array(sorted(p for p in pts if e.a <= p <= e.b))


def integrate(g: MetricGraph, lifts: Sequence[LiftedFunction], edge_id: str,
              integrand: Callable[[np.ndarray], np.ndarray], quad_order: int) -> complex:
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    total = 0j
    knots = _panels(g, lifts, edge_id)
    for lo, hi in zip(knots[:-1], knots[1:]):
        x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * np.sum(weights * integrand(x))
    return total


def _apply_airy(g, lifts, edge_id, x):
    e = g.edge(edge_id)
    return e.alpha * evaluate(lifts, edge_id, x, 3) + e.beta * evaluate(lifts, edge_id, x, 1)


def greens_terms(g: MetricGraph, u: Sequence[LiftedFunction], v: Sequence[LiftedFunction],
                 quad_order: int = 32) -> tuple[complex, complex]:
    """Both sides of ``<u|Av> + <Au|v> = -<B_r Tr_r u, Tr_r v> + <B_l Tr_l u, Tr_l v>``.

    The inner product is linear in its first slot.
    """
    if quad_order < MIN_QUAD_ORDER:
        raise VerificationError(f"quadrature order too low (minimum {MIN_QUAD_ORDER})")
    both = list(u) + list(v)
    lhs = 0j
    for e in g.edges:
        def integrand(x, eid=e.id):
            uu = evaluate(u, eid, x)
            vv = evaluate(v, eid, x)
            return uu * np.conj(_apply_airy(g, v, eid, x)) + _apply_airy(g, u, eid, x) * np.conj(vv)
        lhs += integrate(g, both, e.id, integrand, quad_order)
    Bl = krein.build_form(g, "left")
    Br = krein.build_form(g, "right")
    rhs = (-krein.krein_inner(Br, exact_traces(g, u, "right"), exact_traces(g, v, "right"))
           + krein.krein_inner(Bl, exact_traces(g, u, "left"), exact_traces(g, v, "left")))
    return complex(lhs), complex(rhs)


def check_greens_identity(g: MetricGraph, u, v, quad_order: int = 32) -> float:
    lhs, rhs = greens_terms(g, u, v, quad_order)
    return abs(lhs - rhs) / (1 + abs(lhs))


def random_lift(g: MetricGraph, rng: np.random.Generator,
                cutoff: str = "windowed") -> list[LiftedFunction]:
    """Lifts of random complex traces at every finite edge end."""
    out = []
    for side in ("left", "right"):
        d = 3 * len(g.side_edges(side))
        vals = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        out += lift_traces(g, side, vals, cutoff)
    return out


def max_greens_residual(g: MetricGraph, samples: int, quad_order: int = 32,
                        seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        u, v = random_lift(g, rng), random_lift(g, rng)
        worst = max(worst, check_greens_identity(g, u, v, quad_order))
    return worst


def lift_energy(g: MetricGraph, lifts: Sequence[LiftedFunction], quad_order: int = 32) -> float:
    """``||u||^2 + ||u'||^2 + ||u'''||^2`` summed over the edges."""
    total = 0.0
    for e in g.edges:
        def integrand(x, eid=e.id):
            return sum(np.abs(evaluate(lifts, eid, x, k)) ** 2 for k in (0, 1, 3))
        total += integrate(g, lifts, e.id, integrand, quad_order).real
    return total


def lift_constant(g: MetricGraph, edge_id: str, side: Side = "left",
                  quad_order: int = 32) -> float:
    """Smallest ``c`` with ``lift_energy <= c |t|^2`` for lifts at one edge end.

    The energy is a Hermitian form in ``t``; ``c`` is its largest eigenvalue.
    """
    e = g.edge(edge_id)
    anchor = e.a if side == "left" else e.b
    window = lift_window(g, edge_id)
    basis = [lift_one(edge_id, side, anchor, np.eye(3)[i], window) for i in range(3)]
    G = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            def integrand(x, i=i, j=j):
                return sum(basis[i](x, k) * np.conj(basis[j](x, k)) for k in (0, 1, 3))
            G[i, j] = integrate(g, basis, edge_id, integrand, quad_order)
    return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[-1])


# ---------------------------------------------------------------------------
# Convergence tables.


@dataclass
class ConvergenceRow:
    study: str
    parameter: float
    error: float
    order: float | None = None


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]

    def errors(self, study: str) -> list[float]:
        return [r.error for r in self.rows if r.study == study]

    def ratios(self, study: str) -> list[float]:
        e = self.errors(study)
        return [a / b for a, b in zip(e[:-1], e[1:])]

    @property
    def spatial_monotone(self) -> bool:
        """Whether spatial errors strictly decrease along ``n_list``."""
        e = self.errors("spatial")
        return all(a > b for a, b in zip(e[:-1], e[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["study", "parameter", "error", "observed_order"])
        for r in self.rows:
            w.writerow([r.study, repr(r.parameter), repr(r.error),
                        "" if r.order is None else repr(r.order)])
        return buf.getvalue()


def _with_orders(study, params, errors) -> list[ConvergenceRow]:
    rows = []
    for i, (p, e) in enumerate(zip(params, errors)):
        order = None
        if i > 0 and errors[i - 1] > 0 and e > 0:
            # errors shrink as dt shrinks or as n grows
            refine = params[i - 1] / p if study == "temporal" else p / params[i - 1]
            order = float(np.log(errors[i - 1] / e) / np.log(refine))
        rows.append(ConvergenceRow(study, float(p), float(e), order))
    return rows


def convergence_study(g: MetricGraph, bc: BoundaryOperator, init, n_list, dt_list,
                      t_end: float = 0.01, exact=None, temporal_path: str = "chebyshev",
                      temporal_n: int | None = None,
                      spatial_scheme: str = "crank_nicolson") -> ConvergenceTable:
    """Spatial errors against ``exact(edge, x, t)`` and temporal errors against
    the matrix exponential of the same discrete generator.

    Spatial runs step with the smallest ``dt`` (Crank-Nicolson by default, so
    they bottom out at its time error; ``"matrix_exponential"`` removes that
    floor).  Temporal runs use ``temporal_n`` (default: the largest ``n``) or
    the Fourier path.
    """
    if spatial_scheme not in ("crank_nicolson", "matrix_exponential"):
        raise VerificationError(f"unknown scheme {spatial_scheme!r}")
    rows: list[ConvergenceRow] = []
    if exact is not None and n_list:
        dt = min(dt_list)
        errs = []
        for n in n_list:
            sys = build_generator(g, bc, n)
            c0, _ = sys.reduce(sys.sample(init))
            steps = int(round(t_end / dt))
            u = sys.Z @ evolve(sys, c0, dt, steps, spatial_scheme)
            ref = sys.sample(lambda e, x: exact(e, x, t_end))
            diff = u - ref
            errs.append(np.sqrt(sys.norm2(diff) / sys.norm2(ref)))
        rows += _with_orders("spatial", list(n_list), errs)
    if dt_list:
        if temporal_path == "fourier":
            sys = build_fourier_loop(g, bc, temporal_n or 32)
        else:
            sys = build_generator(g, bc, temporal_n or max(n_list or [32]))
        c0, _ = sys.reduce(sys.sample(init))
        ref = propagator(sys, t_end) @ c0
        errs = []
        for dt in dt_list:
            steps = int(round(t_end / dt))
            if abs(steps * dt - t_end) > 1e-9 * t_end:
                raise VerificationError(f"t_end={t_end} is not a multiple of dt={dt}")
            c = evolve(sys, c0, dt, steps)
            errs.append(np.linalg.norm(c - ref) / np.linalg.norm(ref))
        rows += _with_orders("temporal", list(dt_list), errs)
    return ConvergenceTable(rows)
