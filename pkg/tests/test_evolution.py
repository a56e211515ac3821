import csv
import io
import json
import math

import numpy as np
import pytest

from kdvgraph import boundary
from kdvgraph.boundary import BoundaryOperator
from kdvgraph.discretization import build_fourier_loop, build_generator
from kdvgraph.evolution import (
    ConfigError,
    EvolutionConfig,
    EvolutionError,
    SimulationError,
    evolve,
    gaussian,
    observed_orders,
    plane_wave,
    plane_wave_solution,
    propagator,
    run,
    step_cn,
    step_expm,
)
from kdvgraph.graph_model import loop_graph


@pytest.fixture(scope="module")
def fourier_loop():
    g, bc = boundary.loop_periodic()
    return build_fourier_loop(g, bc, 32)


@pytest.fixture(scope="module")
def damped_loop():
    g, bc = boundary.loop_diag(1.0, 0.0)
    return build_generator(g, bc, 32)


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ConfigError):
        EvolutionConfig(t_end=-1.0)
    with pytest.raises(ConfigError):
        EvolutionConfig(scheme="euler")
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.03, t_end=0.1).n_steps
    assert EvolutionConfig(dt=1e-4, t_end=0.1).n_steps == 1000
    assert isinstance(ConfigError("x"), ValueError)


def test_cn_preserves_norm_on_skew(fourier_loop):
    c = np.random.default_rng(0).standard_normal(fourier_loop.dimension) + 0j
    n0 = np.linalg.norm(c)
    for _ in range(1000):
        c = step_cn(fourier_loop, c, 1e-4)
    assert abs(np.linalg.norm(c) - n0) <= 1e-12 * n0 * 10


def test_cn_per_step_contraction(damped_loop):
    # the CC-mass generator is only approximately dissipative; measure on smooth data
    u = damped_loop.sample(gaussian(0.5, 0.1))
    c, _ = damped_loop.reduce(u)
    for _ in range(200):
        new = step_cn(damped_loop, c, 1e-4)
        assert np.linalg.norm(new) <= np.linalg.norm(c) * (1 + 1e-12)
        c = new


def test_cn_zero_generator():
    g, bc = boundary.loop_periodic()
    sys = build_fourier_loop(g, bc, 16)
    sys.A_red = np.zeros_like(sys.A_red)
    sys._cache.clear()
    c = np.arange(sys.dimension, dtype=complex)
    np.testing.assert_array_equal(step_cn(sys, c, 0.1), c)


def test_expm_semigroup_and_identity(damped_loop):
    c = np.random.default_rng(2).standard_normal(damped_loop.dimension) + 0j
    two = step_expm(damped_loop, step_expm(damped_loop, c, 5e-5), 5e-5)
    one = step_expm(damped_loop, c, 1e-4)
    assert np.linalg.norm(two - one) <= 1e-11 * np.linalg.norm(c)
    np.testing.assert_allclose(propagator(damped_loop, 0.0), np.eye(damped_loop.dimension))


def test_one_step_gap_third_order(fourier_loop):
    c, _ = fourier_loop.reduce(fourier_loop.sample(plane_wave(1)))
    gaps = [np.linalg.norm(step_cn(fourier_loop, c, dt) - step_expm(fourier_loop, c, dt))
            for dt in (4e-4, 2e-4, 1e-4)]
    ratios = [gaps[i] / gaps[i + 1] for i in range(2)]
    assert all(7.0 <= r <= 9.0 for r in ratios)


def test_plane_wave_matches_dispersion(fourier_loop):
    rec = run(fourier_loop, fourier_loop.sample(plane_wave(1)),
              EvolutionConfig(1e-4, 0.01, "matrix_exponential"))
    x = fourier_loop.nodes("e1")
    exact = plane_wave_solution(1, 1.0, 0.0)(x, 0.01)
    assert np.abs(rec.final_state - exact).max() <= 1e-9
    assert rec.norm_drift() <= 1e-12


def test_plane_wave_solution_formula():
    # exp(i k x + i (beta k - alpha k^3) t) with k = 2 pi
    u = plane_wave_solution(1, 2.0, 3.0)
    k = 2 * np.pi
    assert u(0.25, 0.1) == pytest.approx(np.exp(1j * k * 0.25 + 1j * (3 * k - 2 * k ** 3) * 0.1))


def test_zero_init_stays_zero(damped_loop):
    rec = run(damped_loop, np.zeros(damped_loop.n_nodes, dtype=complex), EvolutionConfig(1e-4, 0.001))
    assert np.all(rec.norm2 == 0)
    assert rec.norm_ratio == 1.0


def test_t_end_zero_single_sample(damped_loop):
    rec = run(damped_loop, damped_loop.sample(gaussian(0.5, 0.1)), EvolutionConfig(1e-4, 0.0))
    assert len(rec.times) == 1
    assert rec.norm_ratio == 1.0


def test_damped_run_records(damped_loop):
    rec = run(damped_loop, damped_loop.sample(gaussian(0.5, 0.1)),
              EvolutionConfig(1e-4, 0.02, sample_every=10))
    assert len(rec.times) == 21
    assert rec.norm_ratio < 1
    assert np.all(np.diff(rec.norm2) <= 0)
    assert rec.max_constraint_residual <= 1e-9
    integrated, change = rec.energy_balance()
    assert abs(integrated - change) <= 1e-2 * abs(change)
    assert math.isnan(rec.dissipation_measured[0])
    assert rec.trace_labels == ["r:e1:0", "r:e1:1", "r:e1:2", "l:e1:0", "l:e1:1", "l:e1:2"]


def test_unitary_predicted_rate_vanishes():
    g = loop_graph()
    L = boundary.sample_unitary(g, "v", 3)
    sys = build_generator(g, BoundaryOperator({"v": L}), 32)
    rec = run(sys, sys.sample(gaussian(0.5, 0.05)), EvolutionConfig(1e-4, 0.005))
    scale = np.abs(rec.traces_right).max() ** 2 * np.linalg.norm(sys.B_r, 2)
    assert np.abs(rec.dissipation_predicted).max() <= 1e-9 * scale


def test_projection_residual_reported(damped_loop):
    # constants satisfy u(0) = u(1) with vanishing derivatives; a ramp does not
    rec = run(damped_loop, damped_loop.sample(lambda e, x: 1.0 + 0 * x + 0j), EvolutionConfig(1e-4, 0.0))
    assert rec.projection_residual <= 1e-10
    rec = run(damped_loop, damped_loop.sample(lambda e, x: x + 0j), EvolutionConfig(1e-4, 0.0))
    assert rec.projection_residual > 1e-3


def test_overflow_reports_step():
    g, bc = boundary.loop_periodic()
    sys = build_fourier_loop(g, bc, 16)
    sys.A_red = 300.0 * np.eye(sys.dimension)
    with np.errstate(all="ignore"), pytest.raises(SimulationError) as info:
        run(sys, sys.sample(plane_wave(1)), EvolutionConfig(1.0, 5.0, "matrix_exponential"))
    assert info.value.step == 3


def test_expm_dimension_cap(monkeypatch, damped_loop):
    import kdvgraph.evolution as ev
    monkeypatch.setattr(ev, "EXPM_MAX_DIM", 4)
    with pytest.raises(EvolutionError, match="capped"):
        propagator(damped_loop, 1e-3)


def test_record_serialization(damped_loop):
    rec = run(damped_loop, damped_loop.sample(gaussian(0.5, 0.1)), EvolutionConfig(1e-4, 0.001))
    doc = json.loads(rec.to_json())
    assert doc["format"] == "kdvgraph-run/1"
    assert doc["dissipation_measured"][0] is None
    assert len(doc["t"]) == 11
    text = rec.to_csv()
    assert text.startswith("# kdvgraph-run/1 csv\n")
    rows = list(csv.reader(io.StringIO(text.split("\n", 1)[1])))
    assert rows[0][:4] == ["t", "norm2", "dissipation_predicted", "dissipation_measured"]
    assert len(rows[0]) == 4 + 2 * 6
    assert float(rows[-1][1]) == rec.norm2[-1]


def test_evolve_matches_run(damped_loop):
    u = damped_loop.sample(gaussian(0.4, 0.1))
    rec = run(damped_loop, u, EvolutionConfig(1e-4, 0.001))
    c, _ = damped_loop.reduce(u)
    np.testing.assert_allclose(damped_loop.Z @ evolve(damped_loop, c, 1e-4, 10), rec.final_state)


def test_observed_orders():
    assert observed_orders([4.0, 1.0, 0.25]) == pytest.approx([2.0, 2.0])


def test_max_relative_increase_is_per_step(damped_loop):
    rec = run(damped_loop, damped_loop.sample(gaussian(0.5, 0.1)), EvolutionConfig(1e-4, 0.002))
    assert rec.max_relative_increase() <= 0
    rec.norm2 = np.array([4.0, 2.0, 2.2, 1.0])
    assert rec.max_relative_increase() == pytest.approx(0.1)
