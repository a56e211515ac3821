"""Time stepping of the reduced system and norm/dissipation bookkeeping.

States passed to the steppers are reduced coordinates ``c`` (``u = Z c``), in
which the discrete L2 norm is the Euclidean norm.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .discretization import DiscreteSystem

Scheme = Literal["crank_nicolson", "matrix_exponential"]
EXPM_MAX_DIM = 2000
RUN_FORMAT = "kdvgraph-run/1"


class EvolutionError(RuntimeError):
    pass


class ConfigError(EvolutionError, ValueError):
    pass


class SimulationError(EvolutionError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-4
    t_end: float = 0.1
    scheme: Scheme = "crank_nicolson"
    sample_every: int = 1
    observables: tuple[str, ...] = ("norm2", "traces", "dissipation")

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be non-negative")
        if self.scheme not in ("crank_nicolson", "matrix_exponential"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be at least 1")

    @property
    def n_steps(self) -> int:
        steps = round(self.t_end / self.dt)
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(self.t_end, self.dt):
            raise ConfigError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return int(steps)


def _cn_operators(sys: DiscreteSystem, dt: float):
    key = ("cn", dt)
    if key not in sys._cache:
        n = sys.dimension
        eye = np.eye(n)
        lhs = eye - 0.5 * dt * sys.A_red
        lu, piv = scipy.linalg.lu_factor(lhs, check_finite=False)
        d = np.abs(np.diag(lu))
        if n and not d.min() > 1e-14 * d.max():
            raise EvolutionError(f"I - dt/2 A is singular at dt={dt}; try a smaller dt")
        sys._cache[key] = ((lu, piv), eye + 0.5 * dt * sys.A_red)
    return sys._cache[key]


def step_cn(sys: DiscreteSystem, state: np.ndarray, dt: float) -> np.ndarray:
    """One Crank-Nicolson (Cayley) step; the factorization is cached per dt."""
    lu, rhs = _cn_operators(sys, dt)
    return scipy.linalg.lu_solve(lu, rhs @ state, check_finite=False)


def propagator(sys: DiscreteSystem, t: float) -> np.ndarray:
    if sys.dimension > EXPM_MAX_DIM:
        raise EvolutionError(f"dense exponential capped at dimension {EXPM_MAX_DIM}")
    key = ("expm", t)
    if key not in sys._cache:
        sys._cache[key] = scipy.linalg.expm(t * sys.A_red)
    return sys._cache[key]


def step_expm(sys: DiscreteSystem, state: np.ndarray, dt: float) -> np.ndarray:
    return propagator(sys, dt) @ state


@dataclass
class RunRecord:
    times: np.ndarray
    norm2: np.ndarray
    traces_right: np.ndarray
    traces_left: np.ndarray
    dissipation_predicted: np.ndarray
    dissipation_measured: np.ndarray
    config: EvolutionConfig
    projection_residual: float = 0.0
    max_constraint_residual: float = 0.0
    trace_labels: list[str] = field(default_factory=list)
    fingerprints: dict = field(default_factory=dict)
    final_state: np.ndarray | None = None

    @property
    def norm_ratio(self) -> float:
        n0 = self.norm2[0]
        return float(math.sqrt(self.norm2[-1] / n0)) if n0 > 0 else 1.0

    def norm_drift(self) -> float:
        """Largest ``| ||u(t)|| - ||u(0)|| | / ||u(0)||`` over the run."""
        n = np.sqrt(self.norm2)
        return float(np.abs(n - n[0]).max() / n[0]) if n[0] > 0 else 0.0

    def max_relative_increase(self) -> float:
        """Largest increase of the squared norm between consecutive samples,
        relative to the earlier sample (negative when the norm always drops)."""
        n = self.norm2
        if len(n) < 2 or not np.all(n[:-1] > 0):
            return 0.0
        return float((np.diff(n) / n[:-1]).max())

    def energy_balance(self) -> tuple[float, float]:
        """Integrated measured rate versus the total change of norm squared."""
        dt = np.diff(self.times)
        integrated = float(np.sum(self.dissipation_measured[1:] * dt))
        return integrated, float(self.norm2[-1] - self.norm2[0])

    def mean_rates(self) -> tuple[float, float]:
        """Time-averaged predicted and measured rates over the whole run."""
        dt = np.diff(self.times)
        total = dt.sum()
        if total == 0:
            return float(self.dissipation_predicted[0]), 0.0
        return (float(np.sum(self.dissipation_predicted[1:] * dt) / total),
                float(np.sum(self.dissipation_measured[1:] * dt) / total))

    def to_json(self) -> str:
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a)]

        def carr(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a)]

        doc = {
            "format": RUN_FORMAT,
            "config": asdict(self.config),
            "fingerprints": self.fingerprints,
            "projection_residual": self.projection_residual,
            "max_constraint_residual": self.max_constraint_residual,
            "trace_labels": self.trace_labels,
            "t": arr(self.times),
            "norm2": arr(self.norm2),
            "dissipation_predicted": arr(self.dissipation_predicted),
            "dissipation_measured": arr(self.dissipation_measured),
            "traces_right": carr(self.traces_right),
            "traces_left": carr(self.traces_left),
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {RUN_FORMAT} csv\n")
        w = csv.writer(buf, lineterminator="\n")
        labels = []
        for lab in self.trace_labels:
            labels += [f"{lab}:re", f"{lab}:im"]
        w.writerow(["t", "norm2", "dissipation_predicted", "dissipation_measured"] + labels)
        traces = np.hstack([self.traces_right, self.traces_left])
        for i, t in enumerate(self.times):
            row = [repr(float(t)), repr(float(self.norm2[i])),
                   repr(float(self.dissipation_predicted[i])),
                   repr(float(self.dissipation_measured[i]))]
            for z in traces[i]:
                row += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(row)
        return buf.getvalue()


def trace_labels(sys: DiscreteSystem) -> list[str]:
    out = []
    for side, tag in (("right", "r"), ("left", "l")):
        for e in sys.graph.side_edges(side):
            out += [f"{tag}:{e.id}:{k}" for k in range(3)]
    return out


def run(sys: DiscreteSystem, init: np.ndarray, config: EvolutionConfig,
        fingerprints: dict | None = None) -> RunRecord:
    """Evolve nodal initial data ``init`` and record the observables.

    Rates at sample ``k > 0`` describe the interval ending at ``t_k``: the
    measured rate is the finite difference of the squared norm and the
    predicted rate averages the boundary form over the step midpoints.  At
    ``t_0`` the predicted rate is instantaneous and the measured one is NaN.
    """
    c, residual = sys.reduce(init)
    step = step_cn if config.scheme == "crank_nicolson" else step_expm
    n_steps = config.n_steps
    dt = config.dt

    times, norms, tr_r, tr_l, pred, meas = [], [], [], [], [], []
    max_constraint = 0.0

    def observe(c, t, rate_pred, rate_meas):
        nonlocal max_constraint
        u = sys.Z @ c
        x, y = sys.T_r @ u, sys.T_l @ u
        scale = max(np.linalg.norm(y), np.linalg.norm(sys.L @ x), 1e-300)
        max_constraint = max(max_constraint, float(np.linalg.norm(sys.L @ x - y) / scale)
                             if np.linalg.norm(u) > 0 else 0.0)
        times.append(t)
        norms.append(float(np.vdot(c, c).real))
        tr_r.append(x)
        tr_l.append(y)
        pred.append(rate_pred)
        meas.append(rate_meas)

    observe(c, 0.0, sys.predicted_rate(sys.Z @ c), math.nan)
    acc, n_acc, norm_prev = 0.0, 0, float(np.vdot(c, c).real)
    for k in range(1, n_steps + 1):
        c_new = step(sys, c, dt)
        if not np.all(np.isfinite(c_new)):
            raise SimulationError(k, "non-finite state (try a smaller dt or check the conditions)")
        acc += sys.predicted_rate(sys.Z @ (0.5 * (c + c_new)))
        n_acc += 1
        c = c_new
        if k % config.sample_every == 0 or k == n_steps:
            t = k * dt
            nrm = float(np.vdot(c, c).real)
            span = n_acc * dt
            observe(c, t, acc / n_acc, (nrm - norm_prev) / span)
            acc, n_acc, norm_prev = 0.0, 0, nrm

    return RunRecord(
        times=np.array(times), norm2=np.array(norms),
        traces_right=np.array(tr_r).reshape(len(times), -1),
        traces_left=np.array(tr_l).reshape(len(times), -1),
        dissipation_predicted=np.array(pred), dissipation_measured=np.array(meas),
        config=config, projection_residual=residual,
        max_constraint_residual=max_constraint, trace_labels=trace_labels(sys),
        fingerprints=dict(fingerprints or {}), final_state=sys.Z @ c)


def evolve(sys: DiscreteSystem, c: np.ndarray, dt: float, n_steps: int,
           scheme: Scheme = "crank_nicolson") -> np.ndarray:
    """Advance reduced coordinates without recording anything."""
    step = step_cn if scheme == "crank_nicolson" else step_expm
    for _ in range(n_steps):
        c = step(sys, c, dt)
    return c


def plane_wave(k: int):
    """``x -> exp(2 pi i k (x - a) / (b - a))`` on every edge."""
    def f(edge, x):
        return np.exp(2j * np.pi * k * (x - edge.a) / (edge.b - edge.a))
    return f


def gaussian(center: float, width: float):
    def f(edge, x):
        return np.exp(-((x - center) / width) ** 2) + 0j
    return f


def plane_wave_solution(k: int, alpha: float, beta: float, length: float = 1.0):
    """Exact periodic solution ``exp(i kappa x + i (beta kappa - alpha kappa^3) t)``."""
    kappa = 2 * np.pi * k / length

    def u(x, t):
        return np.exp(1j * kappa * x + 1j * (beta * kappa - alpha * kappa ** 3) * t)
    return u


def observed_orders(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    e = np.asarray(errors, dtype=float)
    return list(np.log(e[:-1] / e[1:]) / np.log(ratio))
