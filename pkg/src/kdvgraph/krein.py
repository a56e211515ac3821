"""Indefinite trace forms and Krein-space predicates in finite dimensions.

Convention: ``<x|y> = y^* B x`` (linear in the first slot).  With it the
Krein adjoint of ``L: K_r -> K_l`` is ``L# = B_r^{-1} L^* B_l``.

The unitarity test uses the form identity ``L^* B_l L = B_r`` together with
invertibility; for matrices this is equivalent to dense domain and range,
injectivity and ``L# = L^{-1}``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph_model import MetricGraph, Side, TraceLayout, require_valid, trace_layout

DEFAULT_TOL = 1e-10


class FormError(ValueError):
    pass


def edge_block(alpha: float, beta: float) -> np.ndarray:
    """The 3x3 form block of one edge end."""
    return np.array([[-beta, 0.0, -alpha],
                     [0.0, alpha, 0.0],
                     [-alpha, 0.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class KreinForm:
    side: Side
    matrix: np.ndarray
    layout: TraceLayout

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def restrict(self, indices) -> "KreinForm":
        idx = list(indices)
        entries = tuple(self.layout.entries[i] for i in idx)
        return KreinForm(self.side, self.matrix[np.ix_(idx, idx)],
                         TraceLayout(self.side, entries))


def build_form(g: MetricGraph, side: Side) -> KreinForm:
    require_valid(g)
    layout = trace_layout(g, side)
    m = np.zeros((layout.dimension, layout.dimension), dtype=complex)
    for i, e in enumerate(g.side_edges(side)):
        m[3 * i:3 * i + 3, 3 * i:3 * i + 3] = edge_block(e.alpha, e.beta)
    return KreinForm(side, m, layout)


def _mat(form) -> np.ndarray:
    return form.matrix if isinstance(form, KreinForm) else np.asarray(form, dtype=complex)


def krein_inner(form, x, y) -> complex:
    B = _mat(form)
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape != (B.shape[0],) or y.shape != (B.shape[0],):
        raise FormError(f"dimension mismatch: form {B.shape[0]}, vectors {x.shape}, {y.shape}")
    return complex(np.vdot(y, B @ x))


def signature(form) -> tuple[int, int]:
    """Counts of positive and negative eigenvalues."""
    B = _mat(form)
    if B.size == 0:
        return 0, 0
    ev = np.linalg.eigvalsh(B)
    scale = np.abs(ev).max()
    if np.any(np.abs(ev) < 1e-12 * scale):
        raise FormError("form is numerically singular")
    return int((ev > 0).sum()), int((ev < 0).sum())


def _check_shapes(B_in: np.ndarray, B_out: np.ndarray, L: np.ndarray) -> None:
    if L.shape != (B_out.shape[0], B_in.shape[0]):
        raise FormError(
            f"operator of shape {L.shape} does not map a {B_in.shape[0]}-dim space "
            f"into a {B_out.shape[0]}-dim space")


def krein_adjoint(B_r, B_l, L) -> np.ndarray:
    """``L#`` with ``<L x|y>_l = <x|L# y>_r`` for all x, y."""
    Br, Bl = _mat(B_r), _mat(B_l)
    L = np.asarray(L, dtype=complex)
    _check_shapes(Br, Bl, L)
    if Br.size == 0:
        return np.zeros((0, Bl.shape[0]), dtype=complex)
    return np.linalg.solve(Br, L.conj().T @ Bl)


@dataclass
class Certificate:
    verdict: bool
    tolerance: float
    residual_norms: dict = field(default_factory=dict)
    min_eigenvalue: float | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.verdict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def is_krein_unitary(B_r, B_l, L, tol: float = DEFAULT_TOL) -> Certificate:
    Br, Bl = _mat(B_r), _mat(B_l)
    L = np.asarray(L, dtype=complex)
    if Br.shape[0] != Bl.shape[0] or L.shape != (Bl.shape[0], Br.shape[0]):
        return Certificate(False, tol, reason="dimension mismatch, no unitary exists")
    if L.size == 0:
        return Certificate(True, tol, {"form": 0.0, "inverse": 0.0}, reason="empty spaces")
    sv = np.linalg.svd(L, compute_uv=False)
    form_res = _norm(L.conj().T @ Bl @ L - Br)
    scale = _norm(Br)
    residuals = {"form": form_res, "form_relative": form_res / scale,
                 "sigma_min": float(sv[-1]), "sigma_max": float(sv[0])}
    if not sv[-1] > tol * sv[0]:
        return Certificate(False, tol, residuals, reason="not invertible")
    ok = form_res <= tol * scale
    return Certificate(bool(ok), tol, residuals,
                       reason="" if ok else "form identity violated")


def is_krein_contractive(B_in, B_out, L, tol: float = DEFAULT_TOL) -> Certificate:
    """``<Lx|Lx>_out <= <x|x>_in``, i.e. ``B_in - L^* B_out L`` is PSD."""
    Bi, Bo = _mat(B_in), _mat(B_out)
    L = np.asarray(L, dtype=complex)
    _check_shapes(Bi, Bo, L)
    if Bi.size == 0:
        return Certificate(True, tol, {}, None, reason="empty domain")
    defect = Bi - L.conj().T @ Bo @ L
    defect = 0.5 * (defect + defect.conj().T)
    lam = float(np.linalg.eigvalsh(defect)[0])
    ok = lam >= -tol * _norm(Bi)
    return Certificate(bool(ok), tol, {"defect_norm": _norm(defect)}, lam,
                       reason="" if ok else "defect has a negative direction")


def exists_unitary(B_r, B_l) -> bool:
    Br, Bl = _mat(B_r), _mat(B_l)
    if Br.shape[0] != Bl.shape[0]:
        return False
    return signature(Br) == signature(Bl)
