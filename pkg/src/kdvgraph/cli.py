"""Command line: ``kdvgraph {check,generate,simulate,verify-form,convergence}``.

Exit codes: 0 success, 1 input error, 2 mathematical rejection, 3 runtime
instability.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import boundary, io, krein
from .boundary import BoundaryError, BoundaryOperator
from .discretization import DiscretizationError, build_fourier_loop, build_generator
from .evolution import EvolutionConfig, EvolutionError, SimulationError, gaussian, plane_wave, run
from .graph_model import GraphError, MetricGraph, incidence, require_valid
from .verification import (
    MIN_QUAD_ORDER,
    VerificationError,
    convergence_study,
    evaluate,
    max_greens_residual,
    random_lift,
)

EXIT_OK, EXIT_INPUT, EXIT_REJECT, EXIT_UNSTABLE = 0, 1, 2, 3
INPUT_ERRORS = (io.FormatError, GraphError, BoundaryError, DiscretizationError,
                VerificationError, krein.FormError, OSError)


class InputError(Exception):
    pass


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fail(code: int, message: str) -> int:
    sys.stderr.write(f"error: {message}\n")
    return code


def load_problem(args, need_bc: bool = True, **builtin_kwargs) -> tuple[MetricGraph, BoundaryOperator | None]:
    if getattr(args, "builtin", None):
        g, bc = boundary.builtin_from_string(args.builtin, **builtin_kwargs)
        return require_valid(g), bc
    if not args.graph:
        raise InputError("give --graph (and --bc) or --builtin")
    g = require_valid(io.load_graph(args.graph))
    bc = None
    if need_bc:
        if not args.bc:
            raise InputError("--bc is required with --graph")
        bc = io.load_bc(args.bc)
    return g, bc


# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    g, bc = load_problem(args)
    result = boundary.classify(g, bc, args.tol)
    _emit(result.to_dict())
    return EXIT_OK if result.generates_reasonable_dynamics else EXIT_REJECT


def generate_bc(g: MetricGraph, kind: str, seed: int, strictness: float = 1.0) -> BoundaryOperator:
    blocks = {}
    for i, v in enumerate(g.vertices):
        out_edges, in_edges = incidence(g, v)
        if not out_edges and not in_edges:
            blocks[v] = np.zeros((0, 0))
            continue
        vseed = [seed, i]
        if kind == "unitary":
            blocks[v] = boundary.sample_unitary(g, v, vseed)
        else:
            blocks[v] = boundary.sample_bicontraction(g, v, vseed, strictness)
    return BoundaryOperator(blocks)


def cmd_generate(args) -> int:
    g, _ = load_problem(args, need_bc=False)
    try:
        bc = generate_bc(g, args.kind, args.seed, args.strictness)
    except BoundaryError as exc:
        return _fail(EXIT_REJECT, str(exc))
    text = io.dumps(io.bc_to_dict(bc))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_init(spec: str, sys_, g: MetricGraph, seed: int):
    kind, _, rest = spec.partition(":")
    vals = [float(x) for x in rest.split(",") if x.strip()] if kind != "file" else []
    if kind == "plane_wave":
        return sys_.sample(plane_wave(int(vals[0]) if vals else 1))
    if kind == "gaussian":
        center, width = (vals + [0.5, 0.1][len(vals):])[:2]
        return sys_.sample(gaussian(center, width))
    if kind == "lifted":
        lifts = random_lift(g, np.random.default_rng(seed))
        return sys_.sample(lambda e, x: evaluate(lifts, e.id, x))
    if kind == "file":
        data = np.loadtxt(rest, delimiter=",", ndmin=2)
        if data.shape[1] != 2:
            raise InputError("init file needs two columns: re,im")
        return data[:, 0] + 1j * data[:, 1]
    raise InputError(f"unknown init {spec!r}; use plane_wave:k, gaussian:c,w, lifted, file:path")


def _scenario_defaults(args) -> None:
    if not args.scenario:
        return
    doc = io.loads_json(Path(args.scenario).read_text(), args.scenario)
    allowed = {"graph", "bc", "builtin", "n", "dt", "t_end", "init", "out", "seed",
               "scheme", "path", "mass", "truncate", "sample_every"}
    unknown = set(doc) - allowed
    if unknown:
        raise InputError(f"unknown scenario fields {sorted(unknown)}")
    base = Path(args.scenario).parent
    for key, value in doc.items():
        if key in ("graph", "bc", "out") and value is not None:
            value = str(base / value)
        if getattr(args, key, None) in (None, SIM_DEFAULTS.get(key)):
            setattr(args, key, value)


SIM_DEFAULTS = {"n": 48, "dt": 1e-4, "t_end": 0.1, "init": "gaussian:0.5,0.1", "seed": 0,
                "scheme": "crank_nicolson", "path": "chebyshev", "mass": "clenshaw_curtis",
                "sample_every": 1}


def cmd_simulate(args) -> int:
    _scenario_defaults(args)
    kwargs = {}
    if args.builtin and args.builtin.startswith("two_halflines"):
        kwargs["length"] = args.truncate or 20.0
    g, bc = load_problem(args, **kwargs)
    if args.path == "fourier":
        sys_ = build_fourier_loop(g, bc, args.n)
    else:
        sys_ = build_generator(g, bc, args.n, mass=args.mass)
    init = _parse_init(args.init, sys_, g, args.seed)
    config = EvolutionConfig(args.dt, args.t_end, args.scheme, args.sample_every)
    fingerprints = {"graph": io.fingerprint(io.graph_to_dict(g)),
                    "bc": io.fingerprint(io.bc_to_dict(bc))}
    try:
        record = run(sys_, init, config, fingerprints)
    except SimulationError as exc:
        return _fail(EXIT_UNSTABLE, f"{exc}; dt={args.dt}, n={args.n}")
    if args.out:
        out = Path(args.out)
        out.with_suffix(".csv").write_text(record.to_csv())
        out.with_suffix(".json").write_text(record.to_json())
    pred, meas = record.mean_rates()
    gap = abs(pred - meas) / abs(pred) if pred else abs(meas)
    _emit({"final_norm_ratio": record.norm_ratio,
           "max_norm_drift": record.norm_drift(),
           "max_constraint_residual": record.max_constraint_residual,
           "projection_residual": record.projection_residual,
           "mean_dissipation_predicted": pred,
           "mean_dissipation_measured": meas,
           "dissipation_relative_gap": gap,
           "samples": len(record.times)})
    return EXIT_OK


def cmd_verify_form(args) -> int:
    g, _ = load_problem(args, need_bc=False)
    if args.quad_order < MIN_QUAD_ORDER:
        return _fail(EXIT_INPUT, "quadrature order too low")
    worst = max_greens_residual(g, args.samples, args.quad_order, args.seed)
    _emit({"samples": args.samples, "quad_order": args.quad_order,
           "max_residual": worst, "threshold": 1e-8})
    return EXIT_OK if worst <= 1e-8 else EXIT_REJECT


def cmd_convergence(args) -> int:
    g, bc = load_problem(args)
    n_list = [int(x) for x in args.n_list.split(",") if x]
    dt_list = [float(x) for x in args.dt_list.split(",") if x]
    init = plane_wave(args.k)
    L = boundary.assemble_global(g, bc)
    if len(g.edges) == 1 and np.array_equal(L, np.eye(3)):
        # periodic loop: plane waves are exact solutions
        kappa = 2 * np.pi * args.k / g.edges[0].length

        def exact(edge, x, t):
            return np.exp(1j * kappa * (x - edge.a) + 1j * (edge.beta * kappa - edge.alpha * kappa ** 3) * t)
    else:
        exact = None
    table = convergence_study(g, bc, init, n_list, dt_list, args.t_end, exact,
                              temporal_path=args.temporal_path,
                              spatial_scheme=args.spatial_scheme)
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_inputs(p, bc: bool = True) -> None:
    p.add_argument("--graph", help="graph JSON file")
    if bc:
        p.add_argument("--bc", help="boundary-condition JSON file")
    p.add_argument("--builtin", help="built-in example, e.g. loop_periodic or 'loop_diag(2,0.5)'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdvgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="classify vertex conditions")
    _add_inputs(p)
    p.add_argument("--tol", type=float, default=krein.DEFAULT_TOL)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("generate", help="sample admissible vertex conditions")
    _add_inputs(p, bc=False)
    p.add_argument("--kind", choices=["unitary", "bicontractive"], default="unitary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strictness", type=float, default=1.0)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="evolve initial data and record norms")
    _add_inputs(p)
    p.add_argument("--scenario", help="JSON scenario file; command-line flags take precedence")
    p.add_argument("--n", type=int, default=SIM_DEFAULTS["n"])
    p.add_argument("--dt", type=float, default=SIM_DEFAULTS["dt"])
    p.add_argument("--t-end", dest="t_end", type=float, default=SIM_DEFAULTS["t_end"])
    p.add_argument("--init", default=SIM_DEFAULTS["init"],
                   help="plane_wave:k | gaussian:center,width | lifted | file:path")
    p.add_argument("--scheme", choices=["crank_nicolson", "matrix_exponential"],
                   default=SIM_DEFAULTS["scheme"])
    p.add_argument("--path", choices=["chebyshev", "fourier"], default=SIM_DEFAULTS["path"])
    p.add_argument("--mass", choices=["clenshaw_curtis", "legendre"], default=SIM_DEFAULTS["mass"])
    p.add_argument("--truncate", type=float, help="half-line truncation length (two_halflines)")
    p.add_argument("--sample-every", dest="sample_every", type=int,
                   default=SIM_DEFAULTS["sample_every"])
    p.add_argument("--seed", type=int, default=SIM_DEFAULTS["seed"])
    p.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-form", help="check the integration-by-parts identity")
    _add_inputs(p, bc=False)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--quad-order", dest="quad_order", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_form)

    p = sub.add_parser("convergence", help="spatial and temporal convergence table (CSV)")
    _add_inputs(p)
    p.add_argument("--n-list", dest="n_list", default="16,24,32")
    p.add_argument("--dt-list", dest="dt_list", default="4e-4,2e-4,1e-4")
    p.add_argument("--t-end", dest="t_end", type=float, default=0.01)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--temporal-path", dest="temporal_path", choices=["chebyshev", "fourier"],
                   default="chebyshev")
    p.add_argument("--spatial-scheme", dest="spatial_scheme",
                   choices=["crank_nicolson", "matrix_exponential"], default="crank_nicolson")
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, ValueError) + INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, str(exc))
    except EvolutionError as exc:
        return _fail(EXIT_UNSTABLE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
